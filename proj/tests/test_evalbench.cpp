#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "phyc/dataset.hpp"
#include "phyc/evalbench.hpp"
#include "phyc/png_io.hpp"

using namespace phyc;
namespace fs = std::filesystem;

namespace {

fs::path tmp_dir(const char* name) {
    fs::path d = fs::temp_directory_path() / "phyc_evalbench_tests" / name;
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
}

std::vector<std::string> lines_of(const fs::path& p) {
    std::ifstream f(p);
    REQUIRE(f.good());
    std::vector<std::string> out;
    std::string line;
    while (std::getline(f, line)) out.push_back(line);
    return out;
}

// Corpus + trained probe shared by the expensive cases; built once.
struct EvalFixture {
    fs::path dir;
    Manifest manifest;
    Probe probe;
};

const EvalFixture& fixture() {
    static EvalFixture* f = [] {
        auto* fx = new EvalFixture;
        fx->dir = tmp_dir("corpus");
        CorpusConfig cc;
        cc.variants_per_cell = 100;  // the probe needs a dense grid to clear its gate
        cc.seed = 5;
        fx->manifest = generate_corpus(fx->dir.string(), cc);
        ProbeConfig pc;
        pc.seed = 1;
        fx->probe = train_probe(fx->dir.string(), pc);
        return fx;
    }();
    return *f;
}

// Structurally valid probe with arbitrary (untrained) weights, for harness
// tests that only need well-formed probabilities.
Probe fake_probe(int64_t input_size, uint64_t seed) {
    Probe p;
    p.object_classes = object_registry();
    p.object_classes.push_back("none");
    p.physics_classes = physics_registry();
    p.physics_classes.push_back("none");
    p.input_size = input_size;
    const int64_t D = input_size * input_size, H = 16;
    Rng rng(seed);
    auto gaussian = [&](Shape s, double sigma) {
        TensorData t = TensorData::zeros(std::move(s));
        for (auto& v : t.data) v = static_cast<float>(sigma * rng.normal());
        return t;
    };
    p.params.set("probe.w1", gaussian({D, H}, 0.1));
    p.params.set("probe.b1", TensorData::zeros({1, H}));
    p.params.set("probe.obj.w", gaussian({H, 9}, 0.3));
    p.params.set("probe.obj.b", TensorData::zeros({1, 9}));
    p.params.set("probe.phy.w", gaussian({H, 7}, 0.3));
    p.params.set("probe.phy.b", TensorData::zeros({1, 7}));
    return p;
}

ConceptDataset tiny_dataset(int64_t size) {
    ConceptDataset d;
    d.target_object = "circle";
    d.physics_name = "melt";
    d.vocab = default_vocabulary();
    d.anchor_prompt = "a photo of [V] object";
    for (int i = 0; i < 2; ++i) {
        ObjectSpec s;
        s.name = "circle";
        s.cx = 0.05 * i;
        d.object_items.emplace_back(rasterize_object(s, size), "a photo of [O] circle");
    }
    const char* others[3] = {"square", "triangle", "star"};
    for (int i = 0; i < 3; ++i) {
        ObjectSpec s;
        s.name = others[i];
        d.physics_items.emplace_back(
            apply_physics(rasterize_object(s, size), {"melt", 0.6, static_cast<uint64_t>(i)}),
            std::string("a photo of [V] ") + others[i]);
    }
    return d;
}

TrainConfig tiny_cfg() {
    TrainConfig cfg;
    cfg.den = DenoiserConfig{8, 8, 4, 16, 1, 32, 8, 8, 10};
    cfg.text = TextConfig{8, 8, 16};
    cfg.steps = 2;
    cfg.batch = 2;
    cfg.rank = 2;
    cfg.lr = 1e-3;
    cfg.seed = 7;
    return cfg;
}

} // namespace

TEST_CASE("wilson interval matches pinned reference values") {
    auto [lo, hi] = wilson95(95, 100);
    CHECK(lo == doctest::Approx(0.888248).epsilon(1e-4));
    CHECK(hi == doctest::Approx(0.978456).epsilon(1e-4));

    auto [lo2, hi2] = wilson95(100, 100);
    CHECK(lo2 == doctest::Approx(0.963009).epsilon(1e-4));
    CHECK(hi2 == doctest::Approx(1.0).epsilon(1e-6));

    CHECK_THROWS_AS(wilson95(5, 0), Error);
    CHECK_THROWS_AS(wilson95(-1, 10), Error);
    CHECK_THROWS_AS(wilson95(11, 10), Error);
}

TEST_CASE("proxy score arithmetic") {
    ProbeOutput out;
    out.object_probs.assign(9, 1.0 / 9);
    out.physics_probs.assign(7, 1.0 / 7);
    auto s = proxy_scores(out, 0, 0);
    CHECK(s.v == doctest::Approx(1.0 / 7).epsilon(1e-15));
    CHECK(s.vo == doctest::Approx(1.0 / 63).epsilon(1e-15));

    out.object_probs.assign(9, 0.0);
    out.physics_probs.assign(7, 0.0);
    out.object_probs[2] = 1.0;
    out.physics_probs[4] = 1.0;
    s = proxy_scores(out, 2, 4);
    CHECK(s.v == 1.0);
    CHECK(s.vo == 1.0);

    // zero physics probability kills the product no matter the object
    s = proxy_scores(out, 2, 3);
    CHECK(s.v == 0.0);
    CHECK(s.vo == 0.0);

    CHECK_THROWS_AS(proxy_scores(out, 9, 0), Error);
    CHECK_THROWS_AS(proxy_scores(out, 0, 7), Error);
}

TEST_CASE("proxy product is bounded by both factors") {
    Rng rng(77);
    for (int trial = 0; trial < 200; ++trial) {
        ProbeOutput out;
        auto draw = [&](size_t n) {
            std::vector<double> p(n);
            double s = 0;
            for (auto& v : p) {
                v = rng.uniform() + 1e-9;
                s += v;
            }
            for (auto& v : p) v /= s;
            return p;
        };
        out.object_probs = draw(9);
        out.physics_probs = draw(7);
        const int64_t oi = static_cast<int64_t>(rng.uniform_u64(9));
        const int64_t pi = static_cast<int64_t>(rng.uniform_u64(7));
        auto s = proxy_scores(out, oi, pi);
        CHECK(s.v >= 0.0);
        CHECK(s.v <= 1.0);
        CHECK(s.vo <= s.v + 1e-15);
        CHECK(s.vo <= out.object_probs[static_cast<size_t>(oi)] + 1e-15);
    }
}

TEST_CASE("trained probe separates the grid and knows its dataset") {
    const EvalFixture& fx = fixture();
    const Probe& p = fx.probe;

    CHECK(p.object_accuracy >= 0.95);
    CHECK(p.physics_accuracy >= 0.95);
    CHECK(p.heldout_count > 100);
    CHECK(p.manifest_crc == manifest_crc32(fx.dir.string()));
    CHECK(p.object_classes.size() == 9);
    CHECK(p.physics_classes.size() == 7);
    CHECK(p.object_classes.back() == "none");
    CHECK(p.physics_classes.back() == "none");

    // training-distribution sanity: a clean centered circle
    ObjectSpec spec;
    spec.name = "circle";
    const ProbeOutput out = probe_forward(p, rasterize_object(spec, 16));
    const size_t obj_arg = static_cast<size_t>(
        std::max_element(out.object_probs.begin(), out.object_probs.end()) -
        out.object_probs.begin());
    const size_t phy_arg = static_cast<size_t>(
        std::max_element(out.physics_probs.begin(), out.physics_probs.end()) -
        out.physics_probs.begin());
    CHECK(p.object_classes[obj_arg] == "circle");
    CHECK(p.physics_classes[phy_arg] == "none");

    // fully dissolved image: no physics concept should be claimed confidently
    const TensorData blank = TensorData::full({16, 16}, -1.0f);
    const ProbeOutput bout = probe_forward(p, blank);
    const size_t barg = static_cast<size_t>(
        std::max_element(bout.physics_probs.begin(), bout.physics_probs.end()) -
        bout.physics_probs.begin());
    const double bmax = bout.physics_probs[barg];
    CHECK((p.physics_classes[barg] == "none" || bmax < 0.9));
}

TEST_CASE("probe refuses to certify itself when undertrained") {
    const EvalFixture& fx = fixture();
    ProbeConfig pc;
    pc.steps = 1;
    pc.seed = 1;
    try {
        train_probe(fx.dir.string(), pc);
        FAIL("expected refusal");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::state_error);
        CHECK(e.message().find("refusing") != std::string::npos);
    }
}

TEST_CASE("probe save/load round-trip") {
    const EvalFixture& fx = fixture();
    auto dir = tmp_dir("probe_io");
    const std::string path = (dir / "probe.ckpt").string();
    save_probe(fx.probe, path);
    const Probe back = load_probe(path);

    CHECK(back.params.names() == fx.probe.params.names());
    for (const auto& [name, t] : fx.probe.params) CHECK(back.params.get(name).data == t.data);
    CHECK(back.object_classes == fx.probe.object_classes);
    CHECK(back.physics_classes == fx.probe.physics_classes);
    CHECK(back.input_size == fx.probe.input_size);
    CHECK(back.manifest_crc == fx.probe.manifest_crc);
    CHECK(back.object_accuracy == fx.probe.object_accuracy);
    CHECK(back.physics_accuracy == fx.probe.physics_accuracy);
    CHECK(back.heldout_count == fx.probe.heldout_count);

    // a plain training checkpoint is not a probe
    TrainerState st;
    st.params.set("w", TensorData::zeros({2}));
    st.config_json = "{\"steps\":5}";
    save_checkpoint(st, (dir / "train.ckpt").string());
    CHECK_THROWS_WITH_AS(load_probe((dir / "train.ckpt").string()),
                         doctest::Contains("not a probe file"), Error);
}

TEST_CASE("benchmark selects the argmax sample and aggregates exactly") {
    const EvalFixture& fx = fixture();
    Rng rng(3);
    const ConceptDataset d1 =
        build_concept_dataset(fx.manifest, fx.dir.string(), "circle", "melt", rng);
    const ConceptDataset d2 =
        build_concept_dataset(fx.manifest, fx.dir.string(), "square", "burn", rng);

    TrainConfig cfg;  // default 16x16 architecture to match the probe
    cfg.steps = 2;
    cfg.seed = 21;

    auto train2 = [&](const ConceptDataset& d) {
        TrainerState st = init_trainer(cfg, static_cast<int64_t>(d.vocab.size()), "{}");
        while (st.step < cfg.steps) train_step(st, cfg, d);
        return st;
    };

    std::vector<EvalEntry> entries(2);
    entries[0] = {train2(d1), cfg, d1.vocab, "circle", "melt", fx.probe.manifest_crc};
    entries[1] = {train2(d2), cfg, d2.vocab, "square", "burn", fx.probe.manifest_crc};

    BenchmarkConfig bc;
    bc.seeds = 3;
    bc.sample_steps = 4;
    bc.base_seed = 9;

    const BenchmarkResult r = run_benchmark(entries, fx.probe, bc);
    REQUIRE(r.combos.size() == 2);
    for (const SampleSet& s : r.combos) {
        REQUIRE(s.proxy_v.size() == 3);
        REQUIRE(s.proxy_vo.size() == 3);
        REQUIRE(s.images.size() == 3);
        size_t best = 0;
        for (size_t i = 1; i < s.proxy_v.size(); ++i)
            if (s.proxy_v[i] > s.proxy_v[best]) best = i;
        CHECK(s.selected == static_cast<int64_t>(best));
        CHECK(s.sel_v == s.proxy_v[best]);
        CHECK(s.sel_vo == s.proxy_vo[best]);
        for (size_t i = 0; i < s.proxy_v.size(); ++i) {
            CHECK(s.proxy_v[i] >= 0.0);
            CHECK(s.proxy_v[i] <= 1.0);
            CHECK(s.proxy_vo[i] <= s.proxy_v[i] + 1e-15);
        }
    }
    CHECK(r.mean_v == doctest::Approx((r.combos[0].sel_v + r.combos[1].sel_v) / 2).epsilon(1e-15));
    CHECK(r.mean_vo ==
          doctest::Approx((r.combos[0].sel_vo + r.combos[1].sel_vo) / 2).epsilon(1e-15));

    // pure function of (checkpoints, probe, seeds); probe untouched
    const ParamStore probe_before = fx.probe.params;
    const BenchmarkResult r2 = run_benchmark(entries, fx.probe, bc);
    for (size_t c = 0; c < r.combos.size(); ++c) {
        CHECK(r.combos[c].proxy_v == r2.combos[c].proxy_v);
        CHECK(r.combos[c].proxy_vo == r2.combos[c].proxy_vo);
    }
    for (const auto& [name, t] : probe_before) CHECK(fx.probe.params.get(name).data == t.data);

    // single-seed selection is trivially index 0
    BenchmarkConfig one = bc;
    one.seeds = 1;
    const SampleSet single = evaluate_state(entries[0].state, cfg, d1.vocab, "circle", "melt",
                                            fx.probe, one);
    CHECK(single.selected == 0);

    // csv: header plus seeds rows per combination, exactly one selected flag each
    auto dir = tmp_dir("bench_csv");
    write_benchmark_csv(r, (dir / "results.csv").string());
    const auto lines = lines_of(dir / "results.csv");
    REQUIRE(lines.size() == 1 + 2 * 3);
    CHECK(lines[0] == "combination,seed,proxy_v,proxy_vo,selected");
    int selected_flags = 0;
    for (size_t i = 1; i < lines.size(); ++i) {
        CAPTURE(lines[i]);
        const bool is_first_combo = lines[i].find("circle_melt") != std::string::npos;
        CHECK(is_first_combo == (i <= 3));  // first combo rows come first
        selected_flags += lines[i].back() == '1';
    }
    CHECK(selected_flags == 2);

    // contact sheet for the first combination
    write_contact_sheet(r.combos[0], (dir / "sheet.png").string(), 2);
    const GrayImage sheet = read_png_gray((dir / "sheet.png").string());
    CHECK(sheet.width == 2 * 16);
    CHECK(sheet.height == 2 * 16);  // 3 tiles in a 2-wide grid -> 2 rows

    // hash mismatch is rejected before any sampling
    std::vector<EvalEntry> bad(1);
    bad[0] = {TrainerState{}, cfg, d1.vocab, "circle", "melt", fx.probe.manifest_crc + 1};
    try {
        run_benchmark(bad, fx.probe, bc);
        FAIL("expected hash mismatch");
    } catch (const Error& e) {
        CHECK(e.code() == Errc::state_error);
        CHECK(e.message().find("hash mismatch") != std::string::npos);
    }
}

TEST_CASE("ablation rows cover full and both removals on a shared seed set") {
    const ConceptDataset data = tiny_dataset(8);
    const Probe probe = fake_probe(8, 41);
    TrainConfig base = tiny_cfg();
    BenchmarkConfig bc;
    bc.seeds = 2;
    bc.sample_steps = 3;

    const auto rows = run_ablation(data, base, probe, 2, bc);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].label == "full");
    CHECK(rows[0].weights.lambda_iso == 1.0);
    CHECK(rows[0].weights.lambda_dec == 1.0);
    CHECK(rows[1].label == "wo_iso");
    CHECK(rows[1].weights.lambda_iso == 0.0);
    CHECK(rows[1].weights.lambda_dec == 1.0);
    CHECK(rows[2].label == "wo_dec");
    CHECK(rows[2].weights.lambda_iso == 1.0);
    CHECK(rows[2].weights.lambda_dec == 0.0);
    for (const AblationRow& row : rows) {
        CHECK(row.weights.form == base.weights.form);
        REQUIRE(row.per_seed_v.size() == 2);
        REQUIRE(row.per_seed_vo.size() == 2);
        CHECK(row.mean_v ==
              doctest::Approx((row.per_seed_v[0] + row.per_seed_v[1]) / 2).epsilon(1e-15));
        CHECK(row.mean_vo ==
              doctest::Approx((row.per_seed_vo[0] + row.per_seed_vo[1]) / 2).epsilon(1e-15));
        const double m = row.mean_v;
        const double want_std = std::sqrt((row.per_seed_v[0] - m) * (row.per_seed_v[0] - m) +
                                          (row.per_seed_v[1] - m) * (row.per_seed_v[1] - m));
        CHECK(row.std_v == doctest::Approx(want_std).epsilon(1e-12));
    }

    auto dir = tmp_dir("ablation_csv");
    write_ablation_csv(rows, (dir / "ablation.csv").string());
    const auto lines = lines_of(dir / "ablation.csv");
    REQUIRE(lines.size() == 4);
    CHECK(lines[0] ==
          "setting,lambda_iso,lambda_dec,mean_proxy_v,std_proxy_v,mean_proxy_vo,std_proxy_vo,seeds");
    CHECK(lines[1].rfind("full,1,1,", 0) == 0);
    CHECK(lines[2].rfind("wo_iso,0,1,", 0) == 0);
    CHECK(lines[3].rfind("wo_dec,1,0,", 0) == 0);
}

TEST_CASE("sweep covers the full grid") {
    const ConceptDataset data = tiny_dataset(8);
    const Probe probe = fake_probe(8, 42);
    TrainConfig base = tiny_cfg();
    base.steps = 1;
    BenchmarkConfig bc;
    bc.seeds = 1;
    bc.sample_steps = 2;

    const std::vector<double> grid = {0.1, 0.5, 1.0, 2.0};
    const auto cells = run_sweep(data, base, probe, grid, 1, bc);
    REQUIRE(cells.size() == 16);
    size_t k = 0;
    for (double li : grid)
        for (double ld : grid) {
            CHECK(cells[k].lambda_iso == li);
            CHECK(cells[k].lambda_dec == ld);
            CHECK(cells[k].per_seed_vo.size() == 1);
            CHECK(cells[k].mean_vo == cells[k].per_seed_vo[0]);
            ++k;
        }

    auto dir = tmp_dir("sweep_csv");
    write_sweep_csv(cells, (dir / "sweep.csv").string());
    const auto lines = lines_of(dir / "sweep.csv");
    REQUIRE(lines.size() == 17);  // header + 16 cells
    CHECK(lines[0] == "lambda_iso,lambda_dec,mean_proxy_vo,seeds");

    CHECK_THROWS_AS(run_sweep(data, base, probe, {}, 1, bc), Error);
}

TEST_CASE("contact sheet rejects empty sets") {
    SampleSet s;
    auto dir = tmp_dir("sheet_err");
    CHECK_THROWS_AS(write_contact_sheet(s, (dir / "x.png").string(), 2), Error);
}
