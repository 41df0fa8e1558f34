#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "phyc/dataset.hpp"
#include "phyc/png_io.hpp"

using namespace phyc;
namespace fs = std::filesystem;

namespace {

ObjectSpec centered(const std::string& name) {
    ObjectSpec s;
    s.name = name;
    return s;  // cx = cy = 0, scale 0.8, intensity 1
}

int64_t fg_count(const TensorData& img, float thresh = 0.0f) {
    int64_t n = 0;
    for (float v : img.data) n += v > thresh;
    return n;
}

double mass(const TensorData& img) {
    double s = 0;
    for (float v : img.data) s += (static_cast<double>(v) + 1.0) / 2.0;
    return s;
}

fs::path tmp_dir(const char* name) {
    fs::path d = fs::temp_directory_path() / "phyc_dataset_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

} // namespace

TEST_CASE("centered circle is symmetric under horizontal flip") {
    TensorData img = rasterize_object(centered("circle"), 16);
    REQUIRE(img.shape == Shape{16, 16});
    for (int64_t y = 0; y < 16; ++y)
        for (int64_t x = 0; x < 16; ++x)
            CHECK(img.at(y * 16 + x) == doctest::Approx(img.at(y * 16 + (15 - x))).epsilon(1e-6));
}

TEST_CASE("degenerate scale is rejected") {
    ObjectSpec s = centered("circle");
    s.scale = 0.0;
    CHECK_THROWS_AS(rasterize_object(s, 16), Error);
}

TEST_CASE("rasterization is deterministic and every shape renders") {
    for (const std::string& name : object_registry()) {
        TensorData a = rasterize_object(centered(name), 16);
        TensorData b = rasterize_object(centered(name), 16);
        CHECK(a.data == b.data);
        CHECK(fg_count(a) > 4);                                  // something visible
        CHECK(fg_count(a) < 16 * 16);                            // not a filled frame
        for (float v : a.data) CHECK((v >= -1.0f && v <= 1.0f));
    }
}

TEST_CASE("shapes are pairwise distinct") {
    std::vector<TensorData> imgs;
    for (const std::string& name : object_registry()) imgs.push_back(rasterize_object(centered(name), 16));
    for (size_t i = 0; i < imgs.size(); ++i)
        for (size_t j = i + 1; j < imgs.size(); ++j)
            CHECK(imgs[i].data != imgs[j].data);
}

TEST_CASE("dissolve severity endpoints") {
    TensorData img = rasterize_object(centered("square"), 16);
    TensorData same = apply_physics(img, {"dissolve", 0.0, 5});
    CHECK(same.data == img.data);
    TensorData gone = apply_physics(img, {"dissolve", 1.0, 5});
    CHECK(fg_count(gone) == 0);
}

TEST_CASE("dissolve removes roughly the severity fraction") {
    TensorData img = rasterize_object(centered("square"), 16);
    int64_t before = fg_count(img);
    REQUIRE(before > 30);
    TensorData out = apply_physics(img, {"dissolve", 0.5, 11});
    double kept = static_cast<double>(fg_count(out)) / static_cast<double>(before);
    CHECK(kept > 0.25);
    CHECK(kept < 0.75);
}

TEST_CASE("expand grows the foreground") {
    TensorData img = rasterize_object(centered("circle"), 16);
    TensorData out = apply_physics(img, {"expand", 0.5, 0});
    CHECK(fg_count(out) > fg_count(img));
}

TEST_CASE("melt conserves mass and settles downward") {
    TensorData img = rasterize_object(centered("triangle"), 16);
    TensorData out = apply_physics(img, {"melt", 0.7, 0});
    CHECK(mass(out) == doctest::Approx(mass(img)).epsilon(0.01));
    // center of mass moves down (bigger y)
    auto com_y = [](const TensorData& t) {
        double sy = 0, sm = 0;
        for (int64_t y = 0; y < 16; ++y)
            for (int64_t x = 0; x < 16; ++x) {
                double m = (static_cast<double>(t.at(y * 16 + x)) + 1.0) / 2.0;
                sy += m * static_cast<double>(y);
                sm += m;
            }
        return sy / sm;
    };
    CHECK(com_y(out) > com_y(img));
}

TEST_CASE("burn erodes and leaves a charred rim") {
    TensorData img = rasterize_object(centered("circle"), 16);
    TensorData out = apply_physics(img, {"burn", 0.6, 0});
    CHECK(fg_count(out) < fg_count(img));
    int64_t rim = 0;
    for (float v : out.data) rim += (v == -0.45f) ? 1 : 0;
    CHECK(rim > 0);
}

TEST_CASE("stochastic transforms are seed-deterministic") {
    TensorData img = rasterize_object(centered("star"), 16);
    for (const std::string& name : {std::string("dissolve"), std::string("shatter"), std::string("deform")}) {
        TensorData a = apply_physics(img, {name, 0.6, 42});
        TensorData b = apply_physics(img, {name, 0.6, 42});
        CHECK(a.data == b.data);
        TensorData c = apply_physics(img, {name, 0.6, 43});
        CHECK(a.data != c.data);
    }
}

TEST_CASE("every transform changes the image at default severity") {
    TensorData img = rasterize_object(centered("crescent"), 16);
    for (const std::string& name : physics_registry()) {
        TensorData out = apply_physics(img, {name, 0.6, 9});
        CHECK(out.shape == img.shape);
        CHECK(out.data != img.data);
        for (float v : out.data) CHECK((v >= -1.0f && v <= 1.0f));
    }
}

TEST_CASE("unknown transform and bad severity are rejected") {
    TensorData img = rasterize_object(centered("circle"), 16);
    CHECK_THROWS_AS(apply_physics(img, {"evaporate", 0.5, 0}), Error);
    CHECK_THROWS_AS(apply_physics(img, {"melt", 1.5, 0}), Error);
    CHECK_THROWS_AS(apply_physics(img, {"melt", -0.1, 0}), Error);
}

TEST_CASE("corpus generation writes a loadable, reproducible dataset") {
    auto dir = tmp_dir("corpus");
    CorpusConfig cfg;
    cfg.n_objects = 3;
    cfg.variants_per_cell = 2;
    cfg.seed = 77;
    Manifest m = generate_corpus(dir.string(), cfg);

    // 3 objects x (1 clean + 6 physics) cells x 2 variants
    CHECK(m.items.size() == 3 * 7 * 2);
    CHECK(m.objects == std::vector<std::string>{"circle", "square", "triangle"});
    CHECK(m.physics.size() == 6);

    Manifest r = read_manifest(dir.string());
    REQUIRE(r.items.size() == m.items.size());
    for (size_t i = 0; i < m.items.size(); ++i) {
        CHECK(r.items[i].png_path == m.items[i].png_path);
        CHECK(r.items[i].prompt == m.items[i].prompt);
        CHECK(r.items[i].role == m.items[i].role);
        CHECK(r.items[i].transform == m.items[i].transform);
        CHECK(r.items[i].severity == m.items[i].severity);
        CHECK(r.items[i].seed == m.items[i].seed);
    }
    CHECK(r.vocabulary == m.vocabulary);

    // prompts tokenize under the shipped vocabulary
    Vocabulary v = make_vocabulary(r.vocabulary);
    for (const DataItem& it : r.items) {
        PromptTokens t = tokenize(it.prompt, v);
        CHECK(t.size() == 8);
        bool is_clean = it.transform == "none";
        CHECK(it.role == (is_clean ? "object" : "physics"));
        CHECK(t[3] == v.id(is_clean ? "[O]" : "[V]"));
        if (!is_clean) {
            CHECK(it.severity >= 0.05);
            CHECK(it.severity <= 0.95);
        }
    }

    // regeneration into a fresh directory gives byte-identical images
    auto dir2 = tmp_dir("corpus2");
    generate_corpus(dir2.string(), cfg);
    for (const DataItem& it : m.items) {
        std::ifstream f1(dir / it.png_path, std::ios::binary);
        std::ifstream f2(dir2 / it.png_path, std::ios::binary);
        std::vector<char> b1{std::istreambuf_iterator<char>(f1), std::istreambuf_iterator<char>()};
        std::vector<char> b2{std::istreambuf_iterator<char>(f2), std::istreambuf_iterator<char>()};
        CHECK(b1 == b2);
        CHECK(!b1.empty());
    }
}

TEST_CASE("pixel data is identical after a png round-trip") {
    auto dir = tmp_dir("quant");
    TensorData img = rasterize_object(centered("bar"), 16);
    std::vector<uint8_t> bytes(img.data.size());
    for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = latent_to_byte(img.data[i]);
    write_png_gray((dir / "x.png").string(), 16, 16, bytes);

    DataItem item;
    item.png_path = "x.png";
    TensorData back = load_item_image(dir.string(), item);
    // one quantization applied at write; reload then requantize is stable
    for (size_t i = 0; i < bytes.size(); ++i) CHECK(latent_to_byte(back.data[i]) == bytes[i]);
}

TEST_CASE("corrupt manifest json names the byte offset") {
    auto dir = tmp_dir("badjson");
    std::ofstream(dir / "manifest.json") << "{ \"vocabulary\": [1, }";
    try {
        read_manifest(dir.string());
        FAIL("expected a format error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::format_error);
        CHECK(std::string(e.what()).find("byte") != std::string::npos);
    }
}

TEST_CASE("manifest paths may not escape the dataset directory") {
    auto dir = tmp_dir("escape");
    std::ofstream(dir / "manifest.json") << R"({
      "vocabulary": ["[PAD]","[V]","[O]"],
      "objects": ["circle"],
      "physics": ["melt"],
      "items": [{"png_path": "../../etc/passwd", "prompt": "a", "role": "object",
                 "transform": "none", "severity": 0.0, "seed": 1}]
    })";
    try {
        read_manifest(dir.string());
        FAIL("expected a format error");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::format_error);
    }
}

TEST_CASE("concept dataset picks the right roles") {
    auto dir = tmp_dir("concept");
    CorpusConfig cfg;
    cfg.n_objects = 5;
    cfg.variants_per_cell = 5;
    cfg.seed = 5;
    Manifest m = generate_corpus(dir.string(), cfg);

    Rng rng(1);
    ConceptDataset cd = build_concept_dataset(m, dir.string(), "square", "melt", rng);
    CHECK(cd.target_object == "square");
    CHECK(cd.physics_name == "melt");
    CHECK(cd.anchor_prompt == "a photo of [V] object");
    CHECK(cd.object_items.size() == 4);
    CHECK(cd.physics_items.size() == 3);
    for (const auto& [img, prompt] : cd.object_items) {
        CHECK(img.shape == Shape{16, 16});
        CHECK(prompt == "a photo of [O] square");
    }
    std::set<std::string> seen;
    for (const auto& [img, prompt] : cd.physics_items) {
        CHECK(prompt.find("square") == std::string::npos);  // excludes the target
        CHECK(prompt.find("[V]") != std::string::npos);
        seen.insert(prompt);
    }
    CHECK(seen.size() == 3);  // three distinct cross-objects

    CHECK_THROWS_AS(build_concept_dataset(m, dir.string(), "gear", "melt", rng), Error);
    CHECK_THROWS_AS(build_concept_dataset(m, dir.string(), "square", "freeze", rng), Error);
}
