#include "phyc/checkpoint.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include <zlib.h>

namespace phyc {

namespace {

constexpr char kMagic[4] = {'P', 'H', 'Y', 'C'};
constexpr uint32_t kVersion = 1;

void put_u32(std::string& buf, uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    buf.append(b, 4);
}

void put_u64(std::string& buf, uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    buf.append(b, 8);
}

void put_f32(std::string& buf, const std::vector<float>& v) {
    static_assert(sizeof(float) == 4);
    buf.append(reinterpret_cast<const char*>(v.data()), v.size() * 4);
}

void put_tensor(std::string& buf, const std::string& name, const TensorData& t) {
    put_u32(buf, static_cast<uint32_t>(name.size()));
    buf.append(name);
    put_u32(buf, static_cast<uint32_t>(t.shape.size()));
    for (int64_t d : t.shape) put_u64(buf, static_cast<uint64_t>(d));
    put_f32(buf, t.data);
}

struct Cursor {
    const std::string& buf;
    size_t pos = 0;
    const std::string& path;

    void need(size_t n) {
        if (pos + n > buf.size()) fail(Errc::format_error, path + ": truncated checkpoint");
    }
    uint32_t u32() {
        need(4);
        uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    uint64_t u64() {
        need(8);
        uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    std::string str(size_t n) {
        need(n);
        std::string s = buf.substr(pos, n);
        pos += n;
        return s;
    }
    std::vector<float> f32(size_t n) {
        need(n * 4);
        std::vector<float> v(n);
        std::memcpy(v.data(), buf.data() + pos, n * 4);
        pos += n * 4;
        return v;
    }
};

TensorData string_tensor(const std::string& s) {
    TensorData t = TensorData::zeros({static_cast<int64_t>(s.size())});
    for (size_t i = 0; i < s.size(); ++i) t.data[i] = static_cast<float>(static_cast<uint8_t>(s[i]));
    return t;
}

std::string tensor_string(const TensorData& t) {
    std::string s(t.data.size(), '\0');
    for (size_t i = 0; i < s.size(); ++i) s[i] = static_cast<char>(static_cast<uint8_t>(std::lround(t.data[i])));
    return s;
}

} // namespace

void save_checkpoint(const TrainerState& state, const std::string& path) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);

    uint32_t count = static_cast<uint32_t>(state.params.count() + state.adam_m.count() +
                                           state.adam_v.count() + 2);
    put_u32(buf, count);
    for (const auto& [name, t] : state.params) put_tensor(buf, name, t);
    for (const auto& [name, t] : state.adam_m) put_tensor(buf, "adam.m." + name, t);
    for (const auto& [name, t] : state.adam_v) put_tensor(buf, "adam.v." + name, t);
    TensorData step = TensorData::scalar(static_cast<float>(state.step));
    put_tensor(buf, "meta.step", step);
    put_tensor(buf, "meta.config_json", string_tensor(state.config_json));

    uint32_t crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
    put_u32(buf, crc);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(Errc::io_error, "cannot open " + path + " for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) fail(Errc::io_error, "short write to " + path);
}

TrainerState load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(Errc::io_error, "cannot open " + path);
    std::string buf{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};

    if (buf.size() < 12 + 4) fail(Errc::format_error, path + ": truncated checkpoint");
    uint32_t want_crc = 0;
    for (int i = 0; i < 4; ++i)
        want_crc |= static_cast<uint32_t>(static_cast<uint8_t>(buf[buf.size() - 4 + i])) << (8 * i);
    uint32_t got_crc = static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size() - 4)));
    if (want_crc != got_crc) fail(Errc::format_error, path + ": checksum mismatch");

    Cursor c{buf, 0, path};
    if (c.str(4) != std::string(kMagic, 4)) fail(Errc::format_error, path + ": not a checkpoint file");
    uint32_t version = c.u32();
    if (version != kVersion)
        fail(Errc::format_error, path + ": unsupported version " + std::to_string(version));
    uint32_t count = c.u32();

    TrainerState state;
    bool saw_step = false, saw_config = false;
    std::map<std::string, bool> seen;
    for (uint32_t i = 0; i < count; ++i) {
        std::string name = c.str(c.u32());
        if (name.empty() || seen.count(name)) fail(Errc::format_error, path + ": duplicate tensor " + name);
        seen[name] = true;
        uint32_t ndim = c.u32();
        if (ndim > 8) fail(Errc::format_error, path + ": implausible rank for " + name);
        Shape shape;
        uint64_t n = 1;
        for (uint32_t d = 0; d < ndim; ++d) {
            uint64_t dim = c.u64();
            if (dim > (1ull << 32)) fail(Errc::format_error, path + ": bad dim for " + name);
            shape.push_back(static_cast<int64_t>(dim));
            n *= dim;
        }
        TensorData t(shape, c.f32(static_cast<size_t>(n)));
        if (name == "meta.step") {
            state.step = static_cast<int64_t>(std::lround(t.data.at(0)));
            saw_step = true;
        } else if (name == "meta.config_json") {
            state.config_json = tensor_string(t);
            saw_config = true;
        } else if (name.rfind("adam.m.", 0) == 0) {
            state.adam_m.set(name.substr(7), std::move(t));
        } else if (name.rfind("adam.v.", 0) == 0) {
            state.adam_v.set(name.substr(7), std::move(t));
        } else {
            state.params.set(name, std::move(t));
        }
    }
    if (c.pos != buf.size() - 4) fail(Errc::format_error, path + ": trailing bytes");
    if (!saw_step || !saw_config) fail(Errc::format_error, path + ": missing metadata");
    return state;
}

} // namespace phyc
