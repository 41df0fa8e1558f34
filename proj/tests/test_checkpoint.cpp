#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <zlib.h>

#include "phyc/checkpoint.hpp"
#include "phyc/common.hpp"
#include "phyc/rng.hpp"
#include "phyc/trainer.hpp"

using namespace phyc;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir(const char* name) {
    fs::path d = fs::temp_directory_path() / "phyc_checkpoint_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

TrainerState sample_state() {
    TrainerState st;
    Rng rng(42);
    TensorData a = TensorData::zeros({3, 4});
    for (auto& v : a.data) v = rng.normal_f();
    TensorData b = TensorData::zeros({5});
    for (auto& v : b.data) v = rng.normal_f();
    st.params.set("den.w", a);
    st.params.set("lora.object.den.w.A", b);
    st.adam_m.set("lora.object.den.w.A", TensorData::full({5}, 0.25f));
    st.adam_v.set("lora.object.den.w.A", TensorData::full({5}, 1e-6f));
    st.step = 123;
    st.config_json = "{\"steps\":500,\"seed\":7}";
    return st;
}

bool stores_equal(const ParamStore& x, const ParamStore& y) {
    if (x.names() != y.names()) return false;
    for (const auto& [name, t] : x) {
        const TensorData& u = y.get(name);
        if (t.shape != u.shape || t.data != u.data) return false;
    }
    return true;
}

std::string read_file(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    REQUIRE(f.good());
    return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& p, const std::string& bytes) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    REQUIRE(f.good());
}

void put_u32(std::string& buf, uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

// payload + its CRC32, so hand-built files exercise the parser, not the
// checksum gate.
std::string sealed(std::string payload) {
    uint32_t crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(payload.data()), static_cast<uInt>(payload.size())));
    put_u32(payload, crc);
    return payload;
}

} // namespace

TEST_CASE("checkpoint round-trip is bit-exact") {
    auto dir = tmp_dir("roundtrip");
    TrainerState st = sample_state();
    save_checkpoint(st, (dir / "a.ckpt").string());
    TrainerState back = load_checkpoint((dir / "a.ckpt").string());

    CHECK(stores_equal(st.params, back.params));
    CHECK(stores_equal(st.adam_m, back.adam_m));
    CHECK(stores_equal(st.adam_v, back.adam_v));
    CHECK(back.step == 123);
    CHECK(back.config_json == st.config_json);
}

TEST_CASE("save is byte-deterministic") {
    auto dir = tmp_dir("determinism");
    TrainerState st = sample_state();
    save_checkpoint(st, (dir / "a.ckpt").string());
    save_checkpoint(st, (dir / "b.ckpt").string());
    CHECK(read_file(dir / "a.ckpt") == read_file(dir / "b.ckpt"));
}

TEST_CASE("empty config string survives the round-trip") {
    auto dir = tmp_dir("emptycfg");
    TrainerState st = sample_state();
    st.config_json.clear();
    save_checkpoint(st, (dir / "a.ckpt").string());
    CHECK(load_checkpoint((dir / "a.ckpt").string()).config_json.empty());
}

TEST_CASE("full trainer state round-trips bit-exactly") {
    auto dir = tmp_dir("trainerstate");
    TrainConfig cfg;
    cfg.den = DenoiserConfig{8, 8, 4, 16, 1, 32, 8, 4, 10};
    cfg.text = TextConfig{4, 8, 16};
    cfg.rank = 2;
    cfg.seed = 9;
    TrainerState st = init_trainer(cfg, 12, "{\"rank\":2}");
    st.step = 250;
    save_checkpoint(st, (dir / "t.ckpt").string());
    TrainerState back = load_checkpoint((dir / "t.ckpt").string());
    CHECK(stores_equal(st.params, back.params));
    CHECK(stores_equal(st.adam_m, back.adam_m));
    CHECK(stores_equal(st.adam_v, back.adam_v));
    CHECK(back.step == 250);
    CHECK(back.config_json == "{\"rank\":2}");
}

TEST_CASE("flipped payload byte fails the checksum") {
    auto dir = tmp_dir("flip");
    save_checkpoint(sample_state(), (dir / "a.ckpt").string());
    std::string bytes = read_file(dir / "a.ckpt");
    bytes[bytes.size() / 2] ^= 0x01;
    write_file(dir / "a.ckpt", bytes);
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "a.ckpt").string()),
                         doctest::Contains("checksum mismatch"), Error);
}

TEST_CASE("truncated file is rejected") {
    auto dir = tmp_dir("trunc");
    save_checkpoint(sample_state(), (dir / "a.ckpt").string());
    std::string bytes = read_file(dir / "a.ckpt");

    // Chopping the tail breaks the checksum.
    write_file(dir / "short.ckpt", bytes.substr(0, bytes.size() - 9));
    CHECK_THROWS_AS(load_checkpoint((dir / "short.ckpt").string()), Error);

    // A re-sealed truncation gets past the CRC and must still be caught.
    write_file(dir / "resealed.ckpt", sealed(bytes.substr(0, bytes.size() - 40)));
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "resealed.ckpt").string()),
                         doctest::Contains("truncated"), Error);

    // Below even the fixed header size.
    write_file(dir / "stub.ckpt", std::string("PHY"));
    CHECK_THROWS_AS(load_checkpoint((dir / "stub.ckpt").string()), Error);
}

TEST_CASE("wrong magic and wrong version are named errors") {
    auto dir = tmp_dir("header");

    std::string junk = "JUNK";
    put_u32(junk, 1);
    put_u32(junk, 0);
    write_file(dir / "junk.ckpt", sealed(junk));
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "junk.ckpt").string()),
                         doctest::Contains("not a checkpoint file"), Error);

    std::string v2 = "PHYC";
    put_u32(v2, 2);
    put_u32(v2, 0);
    write_file(dir / "v2.ckpt", sealed(v2));
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "v2.ckpt").string()),
                         doctest::Contains("unsupported version 2"), Error);
}

TEST_CASE("trailing bytes after the declared tensors are rejected") {
    auto dir = tmp_dir("trailing");
    save_checkpoint(sample_state(), (dir / "a.ckpt").string());
    std::string bytes = read_file(dir / "a.ckpt");
    std::string payload = bytes.substr(0, bytes.size() - 4);
    payload += "extra";
    write_file(dir / "a.ckpt", sealed(payload));
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "a.ckpt").string()),
                         doctest::Contains("trailing bytes"), Error);
}

TEST_CASE("metadata tensors are mandatory") {
    auto dir = tmp_dir("meta");
    std::string payload = "PHYC";
    put_u32(payload, 1);
    put_u32(payload, 0);  // zero tensors: no meta.step / meta.config_json
    write_file(dir / "a.ckpt", sealed(payload));
    CHECK_THROWS_WITH_AS(load_checkpoint((dir / "a.ckpt").string()),
                         doctest::Contains("missing metadata"), Error);
}

TEST_CASE("missing file raises io_error") {
    auto dir = tmp_dir("missing");
    try {
        load_checkpoint((dir / "nope.ckpt").string());
        FAIL("expected an error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::io_error);
    }
}
