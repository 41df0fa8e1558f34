#include "phyc/evalbench.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numbers>
#include <fstream>

#include <json.hpp>
#include <zlib.h>

#include "phyc/diffusion.hpp"
#include "phyc/lora.hpp"
#include "phyc/png_io.hpp"
#include "phyc/threading.hpp"

namespace phyc {

namespace {

std::string last_word(const std::string& prompt) {
    size_t p = prompt.find_last_of(' ');
    return p == std::string::npos ? prompt : prompt.substr(p + 1);
}

int64_t index_of(const std::vector<std::string>& names, const std::string& name) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) fail(Errc::unknown_name, "class " + name + " not known to the probe");
    return it - names.begin();
}

size_t argmax(const std::vector<double>& v) {
    return static_cast<size_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

std::string fmt(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof buf, v);
    return {buf, res.ptr};
}

void write_text_file(const std::string& path, const std::string& text) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) fail(Errc::io_error, "cannot open " + path);
    f.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!f) fail(Errc::io_error, "short write to " + path);
}

double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double s = 0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

} // namespace

// --- probe ------------------------------------------------------------------

uint32_t manifest_crc32(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json", std::ios::binary);
    if (!f) fail(Errc::io_error, "cannot open " + dir + "/manifest.json");
    std::string bytes{std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
    return static_cast<uint32_t>(
        crc32(0L, reinterpret_cast<const Bytef*>(bytes.data()), static_cast<uInt>(bytes.size())));
}

ProbeOutput probe_forward(const Probe& p, const TensorData& img) {
    const int64_t S = p.input_size;
    if (img.shape != Shape{S, S})
        fail(Errc::shape_mismatch,
             "probe expects a " + std::to_string(S) + "x" + std::to_string(S) + " image, got " +
                 shape_str(img.shape));
    const TensorData& w1 = p.params.get("probe.w1");
    const TensorData& b1 = p.params.get("probe.b1");
    const int64_t D = w1.shape[0], H = w1.shape[1];

    std::vector<double> h(static_cast<size_t>(H));
    for (int64_t j = 0; j < H; ++j) {
        double acc = b1.at(j);
        for (int64_t i = 0; i < D; ++i) acc += static_cast<double>(img.at(i)) * w1.at(i * H + j);
        h[static_cast<size_t>(j)] = std::tanh(acc);
    }

    auto head = [&](const char* wname, const char* bname) {
        const TensorData& w = p.params.get(wname);
        const TensorData& b = p.params.get(bname);
        const int64_t C = w.shape[1];
        std::vector<double> z(static_cast<size_t>(C));
        for (int64_t c = 0; c < C; ++c) {
            double acc = b.at(c);
            for (int64_t j = 0; j < H; ++j) acc += h[static_cast<size_t>(j)] * w.at(j * C + c);
            z[static_cast<size_t>(c)] = acc;
        }
        const double m = *std::max_element(z.begin(), z.end());
        double norm = 0;
        for (double& v : z) {
            v = std::exp(v - m);
            norm += v;
        }
        for (double& v : z) v /= norm;
        return z;
    };

    ProbeOutput out;
    out.object_probs = head("probe.obj.w", "probe.obj.b");
    out.physics_probs = head("probe.phy.w", "probe.phy.b");
    return out;
}

namespace {

struct LabeledImage {
    TensorData img;
    int64_t obj = 0, phy = 0;
};

// -mean(log p[target] + eps) over the batch; eps keeps underflowed
// probabilities away from log(0).
Var cross_entropy(Graph& g, Var probs, const std::vector<int64_t>& targets, int64_t classes) {
    const int64_t B = static_cast<int64_t>(targets.size());
    TensorData onehot = TensorData::zeros({B, classes});
    for (int64_t i = 0; i < B; ++i) onehot.at(i * classes + targets[static_cast<size_t>(i)]) = 1.0f;
    Var picked = g.mul(g.log(g.add_scalar(probs, 1e-12)), g.constant(onehot));
    return g.scale(g.sum_all(picked), -1.0 / static_cast<double>(B));
}

} // namespace

Probe train_probe(const std::string& data_dir, const ProbeConfig& cfg) {
    if (cfg.hidden < 1 || cfg.steps < 1 || cfg.batch < 1)
        fail(Errc::invalid_argument, "probe config must have positive hidden/steps/batch");
    const Manifest m = read_manifest(data_dir);
    if (m.items.empty()) fail(Errc::degenerate_input, "empty dataset");

    Probe p;
    p.object_classes = m.objects;
    p.object_classes.push_back("none");
    p.physics_classes = m.physics;
    p.physics_classes.push_back("none");
    p.manifest_crc = manifest_crc32(data_dir);
    const int64_t none_obj = static_cast<int64_t>(p.object_classes.size()) - 1;
    const int64_t none_phy = static_cast<int64_t>(p.physics_classes.size()) - 1;

    std::vector<LabeledImage> real(m.items.size());
    parallel_for(static_cast<int64_t>(m.items.size()), [&](int64_t i) {
        const DataItem& it = m.items[static_cast<size_t>(i)];
        LabeledImage& row = real[static_cast<size_t>(i)];
        row.img = load_item_image(data_dir, it);
        row.obj = index_of(p.object_classes, last_word(it.prompt));
        row.phy = it.transform == "none" ? none_phy : index_of(p.physics_classes, it.transform);
    });
    p.input_size = real[0].img.shape[0];
    const int64_t S = p.input_size;
    for (const LabeledImage& r : real)
        if (r.img.shape != Shape{S, S}) fail(Errc::shape_mismatch, "mixed image sizes in dataset");
    const int64_t D = S * S;

    Rng rng(cfg.seed);
    std::vector<LabeledImage> train;
    std::vector<const LabeledImage*> heldout;
    for (size_t i = 0; i < real.size(); ++i) {
        if (i % 6 == 5) heldout.push_back(&real[i]);
        else train.push_back(real[i]);
    }
    if (heldout.empty() || train.empty()) fail(Errc::degenerate_input, "dataset too small to split");
    // fabricated rows teach both "none" heads: blanks and pure noise
    for (int64_t k = 0; k < cfg.none_items; ++k) {
        LabeledImage row;
        row.img = TensorData::full({S, S}, -1.0f);
        if (k % 2 == 1)
            for (auto& v : row.img.data) v = static_cast<float>(rng.uniform(-1.0, 1.0));
        row.obj = none_obj;
        row.phy = none_phy;
        train.push_back(std::move(row));
    }

    const int64_t H = cfg.hidden;
    const int64_t CO = static_cast<int64_t>(p.object_classes.size());
    const int64_t CP = static_cast<int64_t>(p.physics_classes.size());
    auto gaussian = [&](Shape shape, double sigma) {
        TensorData t = TensorData::zeros(std::move(shape));
        for (auto& v : t.data) v = static_cast<float>(sigma * rng.normal());
        return t;
    };
    p.params.set("probe.w1", gaussian({D, H}, 1.0 / std::sqrt(static_cast<double>(D))));
    p.params.set("probe.b1", TensorData::zeros({1, H}));
    p.params.set("probe.obj.w", gaussian({H, CO}, 1.0 / std::sqrt(static_cast<double>(H))));
    p.params.set("probe.obj.b", TensorData::zeros({1, CO}));
    p.params.set("probe.phy.w", gaussian({H, CP}, 1.0 / std::sqrt(static_cast<double>(H))));
    p.params.set("probe.phy.b", TensorData::zeros({1, CP}));

    ParamStore adam_m, adam_v;
    for (const auto& [name, t] : p.params) {
        adam_m.set(name, TensorData::zeros(t.shape));
        adam_v.set(name, TensorData::zeros(t.shape));
    }
    AdamConfig adam;
    adam.lr = cfg.lr;

    const int64_t B = std::min<int64_t>(cfg.batch, static_cast<int64_t>(train.size()));
    for (int64_t step = 0; step < cfg.steps; ++step) {
        TensorData x = TensorData::zeros({B, D});
        std::vector<int64_t> obj_t(static_cast<size_t>(B)), phy_t(static_cast<size_t>(B));
        for (int64_t i = 0; i < B; ++i) {
            const LabeledImage& row = train[rng.uniform_u64(train.size())];
            // +-1px shift augmentation plus pixel noise: the probe must stay
            // robust to placement jitter and sampler artifacts
            const int64_t sx = static_cast<int64_t>(rng.uniform_u64(3)) - 1;
            const int64_t sy = static_cast<int64_t>(rng.uniform_u64(3)) - 1;
            for (int64_t yy = 0; yy < S; ++yy)
                for (int64_t xx = 0; xx < S; ++xx) {
                    const int64_t uy = yy + sy, ux = xx + sx;
                    const float v = (uy < 0 || uy >= S || ux < 0 || ux >= S)
                                        ? -1.0f
                                        : row.img.at(uy * S + ux);
                    x.at(i * D + yy * S + xx) =
                        v + static_cast<float>(cfg.noise_sigma * rng.normal());
                }
            obj_t[static_cast<size_t>(i)] = row.obj;
            phy_t[static_cast<size_t>(i)] = row.phy;
        }
        adam.lr = cfg.lr * (0.55 + 0.45 * std::cos(std::numbers::pi * static_cast<double>(step) /
                                                   static_cast<double>(cfg.steps)));

        Graph g;
        for (const auto& [name, t] : p.params) g.leaf(name, t);
        Var h = g.tanh(g.add(g.matmul(g.constant(x), g.leaf_var("probe.w1")),
                             g.broadcast_rows(g.leaf_var("probe.b1"), B)));
        Var po = g.softmax_last(g.add(g.matmul(h, g.leaf_var("probe.obj.w")),
                                      g.broadcast_rows(g.leaf_var("probe.obj.b"), B)));
        Var pp = g.softmax_last(g.add(g.matmul(h, g.leaf_var("probe.phy.w")),
                                      g.broadcast_rows(g.leaf_var("probe.phy.b"), B)));
        Var loss = g.add(cross_entropy(g, po, obj_t, CO), cross_entropy(g, pp, phy_t, CP));

        const auto grads = g.backward(loss, p.params);
        std::map<std::string, std::vector<float>> gm;
        for (const auto& [name, var] : grads) gm.emplace(name, var.value());
        adamw_update(p.params, adam_m, adam_v, gm, step + 1, adam);
    }

    int64_t ok_obj = 0, ok_phy = 0;
    for (const LabeledImage* row : heldout) {
        const ProbeOutput out = probe_forward(p, row->img);
        ok_obj += static_cast<int64_t>(argmax(out.object_probs)) == row->obj;
        ok_phy += static_cast<int64_t>(argmax(out.physics_probs)) == row->phy;
    }
    p.heldout_count = static_cast<int64_t>(heldout.size());
    p.object_accuracy = static_cast<double>(ok_obj) / static_cast<double>(p.heldout_count);
    p.physics_accuracy = static_cast<double>(ok_phy) / static_cast<double>(p.heldout_count);
    if (p.object_accuracy < cfg.min_accuracy || p.physics_accuracy < cfg.min_accuracy)
        fail(Errc::state_error,
             "probe held-out accuracy " + fmt(p.object_accuracy) + " (object) / " +
                 fmt(p.physics_accuracy) + " (physics) below the required " +
                 fmt(cfg.min_accuracy) + "; refusing to emit the probe");
    return p;
}

void save_probe(const Probe& p, const std::string& path) {
    nlohmann::ordered_json meta;
    meta["kind"] = "probe";
    meta["input_size"] = p.input_size;
    meta["object_classes"] = p.object_classes;
    meta["physics_classes"] = p.physics_classes;
    meta["manifest_crc"] = p.manifest_crc;
    meta["object_accuracy"] = p.object_accuracy;
    meta["physics_accuracy"] = p.physics_accuracy;
    meta["heldout_count"] = p.heldout_count;

    TrainerState st;
    st.params = p.params;
    st.config_json = meta.dump();
    save_checkpoint(st, path);
}

Probe load_probe(const std::string& path) {
    TrainerState st = load_checkpoint(path);
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(st.config_json);
    } catch (const nlohmann::json::exception&) {
        fail(Errc::format_error, path + ": not a probe file");
    }
    if (!meta.is_object() || meta.value("kind", "") != "probe")
        fail(Errc::format_error, path + ": not a probe file");

    Probe p;
    p.params = std::move(st.params);
    try {
        p.input_size = meta.at("input_size").get<int64_t>();
        p.object_classes = meta.at("object_classes").get<std::vector<std::string>>();
        p.physics_classes = meta.at("physics_classes").get<std::vector<std::string>>();
        p.manifest_crc = meta.at("manifest_crc").get<uint32_t>();
        p.object_accuracy = meta.at("object_accuracy").get<double>();
        p.physics_accuracy = meta.at("physics_accuracy").get<double>();
        p.heldout_count = meta.at("heldout_count").get<int64_t>();
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::format_error, path + ": bad probe metadata: " + e.what());
    }
    for (const char* name : {"probe.w1", "probe.b1", "probe.obj.w", "probe.obj.b", "probe.phy.w",
                             "probe.phy.b"})
        if (!p.params.contains(name)) fail(Errc::format_error, path + ": missing tensor " + name);
    return p;
}

std::pair<double, double> wilson95(int64_t k, int64_t n) {
    if (n <= 0 || k < 0 || k > n) fail(Errc::invalid_argument, "wilson95 needs 0 <= k <= n, n > 0");
    const double z = 1.959963984540054;  // Phi^-1(0.975)
    const double nn = static_cast<double>(n), ph = static_cast<double>(k) / nn;
    const double denom = 1.0 + z * z / nn;
    const double center = (ph + z * z / (2 * nn)) / denom;
    const double half = z * std::sqrt(ph * (1 - ph) / nn + z * z / (4 * nn * nn)) / denom;
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

// --- proxy metrics ----------------------------------------------------------

ProxyScores proxy_scores(const ProbeOutput& out, int64_t object_idx, int64_t physics_idx) {
    if (object_idx < 0 || object_idx >= static_cast<int64_t>(out.object_probs.size()))
        fail(Errc::out_of_range, "object index " + std::to_string(object_idx));
    if (physics_idx < 0 || physics_idx >= static_cast<int64_t>(out.physics_probs.size()))
        fail(Errc::out_of_range, "physics index " + std::to_string(physics_idx));
    ProxyScores s;
    s.v = out.physics_probs[static_cast<size_t>(physics_idx)];
    s.vo = s.v * out.object_probs[static_cast<size_t>(object_idx)];
    return s;
}

ProxyScores proxy_scores(const Probe& p, const TensorData& img, const std::string& object_name,
                         const std::string& physics_name) {
    return proxy_scores(probe_forward(p, img), index_of(p.object_classes, object_name),
                        index_of(p.physics_classes, physics_name));
}

// --- benchmark --------------------------------------------------------------

SampleSet evaluate_state(const TrainerState& st, const TrainConfig& cfg, const Vocabulary& vocab,
                         const std::string& object, const std::string& physics, const Probe& probe,
                         const BenchmarkConfig& bc) {
    if (bc.seeds < 1) fail(Errc::invalid_argument, "benchmark needs at least one seed");
    const int64_t obj_idx = index_of(probe.object_classes, object);
    const int64_t phy_idx = index_of(probe.physics_classes, physics);
    if (cfg.den.height != probe.input_size || cfg.den.width != probe.input_size)
        fail(Errc::shape_mismatch, "probe input size does not match the model");

    const PromptTokens tokens =
        tokenize("a photo of [V] [O] " + object, vocab, cfg.text.l_max);
    const PromptTokens pad(static_cast<size_t>(cfg.text.l_max), kPadId);
    const TensorData cond = encode(tokens, st.params, cfg.text);
    const TensorData uncond = encode(pad, st.params, cfg.text);
    const DiffusionSchedule sched = make_schedule(cfg.den.T);
    const auto hosts = lora_host_names(cfg.den);

    SampleSet out;
    out.object = object;
    out.physics = physics;
    out.images.resize(static_cast<size_t>(bc.seeds));
    out.proxy_v.resize(static_cast<size_t>(bc.seeds));
    out.proxy_vo.resize(static_cast<size_t>(bc.seeds));

    parallel_for(bc.seeds, [&](int64_t i) {
        // binder caches are per-graph but not thread-safe to share; each task
        // gets its own
        Binder w = lora_binder(st.params, hosts, BranchConfig::both(), BranchConfig::none());
        SampleConfig sc;
        sc.n_steps = bc.sample_steps;
        sc.guidance = bc.guidance;
        sc.seed = Rng::mix(bc.base_seed, static_cast<uint64_t>(i));
        TensorData img = sample(w, cfg.den, sched, cond, tokens, uncond, pad, sc);
        const ProxyScores ps = proxy_scores(probe_forward(probe, img), obj_idx, phy_idx);
        out.images[static_cast<size_t>(i)] = std::move(img);
        out.proxy_v[static_cast<size_t>(i)] = ps.v;
        out.proxy_vo[static_cast<size_t>(i)] = ps.vo;
    });

    out.selected = static_cast<int64_t>(argmax(out.proxy_v));
    out.sel_v = out.proxy_v[static_cast<size_t>(out.selected)];
    out.sel_vo = out.proxy_vo[static_cast<size_t>(out.selected)];
    return out;
}

BenchmarkResult run_benchmark(const std::vector<EvalEntry>& entries, const Probe& probe,
                              const BenchmarkConfig& bc) {
    if (entries.empty()) fail(Errc::invalid_argument, "no checkpoints to evaluate");
    BenchmarkResult r;
    for (const EvalEntry& e : entries) {
        if (e.manifest_crc != 0 && e.manifest_crc != probe.manifest_crc)
            fail(Errc::state_error, "probe/dataset hash mismatch for " + e.object + "_" + e.physics);
        r.combos.push_back(
            evaluate_state(e.state, e.cfg, e.vocab, e.object, e.physics, probe, bc));
    }
    std::vector<double> vs, vos;
    for (const SampleSet& s : r.combos) {
        vs.push_back(s.sel_v);
        vos.push_back(s.sel_vo);
    }
    r.mean_v = mean_of(vs);
    r.mean_vo = mean_of(vos);
    return r;
}

void write_benchmark_csv(const BenchmarkResult& r, const std::string& path) {
    std::string text = "combination,seed,proxy_v,proxy_vo,selected\n";
    for (const SampleSet& s : r.combos)
        for (size_t i = 0; i < s.proxy_v.size(); ++i)
            text += s.object + "_" + s.physics + "," + std::to_string(i) + "," + fmt(s.proxy_v[i]) +
                    "," + fmt(s.proxy_vo[i]) + "," +
                    (static_cast<int64_t>(i) == s.selected ? "1" : "0") + "\n";
    write_text_file(path, text);
}

void write_contact_sheet(const SampleSet& s, const std::string& path, int64_t cols) {
    if (s.images.empty()) fail(Errc::degenerate_input, "no images for contact sheet");
    if (cols < 1) fail(Errc::invalid_argument, "cols must be >= 1");
    const int64_t S = s.images[0].shape[0];
    const int64_t n = static_cast<int64_t>(s.images.size());
    const int64_t rows = (n + cols - 1) / cols;
    std::vector<uint8_t> canvas(static_cast<size_t>(rows * S * cols * S), 0);
    for (int64_t k = 0; k < n; ++k) {
        const TensorData& img = s.images[static_cast<size_t>(k)];
        if (img.shape != Shape{S, S}) fail(Errc::shape_mismatch, "mixed sample sizes");
        const int64_t r0 = (k / cols) * S, c0 = (k % cols) * S;
        for (int64_t y = 0; y < S; ++y)
            for (int64_t x = 0; x < S; ++x)
                canvas[static_cast<size_t>((r0 + y) * cols * S + c0 + x)] =
                    latent_to_byte(img.at(y * S + x));
    }
    write_png_gray(path, cols * S, rows * S, canvas);
}

// --- ablation / sweep -------------------------------------------------------

namespace {

TrainerState train_fresh(const TrainConfig& cfg, const ConceptDataset& data) {
    TrainerState st = init_trainer(cfg, static_cast<int64_t>(data.vocab.size()), "");
    while (st.step < cfg.steps) train_step(st, cfg, data);
    return st;
}

void seed_scores(const ConceptDataset& data, const TrainConfig& cfg, const Probe& probe,
                 int64_t n_seeds, const BenchmarkConfig& bc, std::vector<double>& v_out,
                 std::vector<double>& vo_out) {
    for (int64_t s = 0; s < n_seeds; ++s) {
        TrainConfig run = cfg;
        run.seed = Rng::mix(cfg.seed, static_cast<uint64_t>(s));
        const TrainerState st = train_fresh(run, data);
        const SampleSet set = evaluate_state(st, run, data.vocab, data.target_object,
                                             data.physics_name, probe, bc);
        v_out.push_back(set.sel_v);
        vo_out.push_back(set.sel_vo);
    }
}

} // namespace

std::vector<AblationRow> run_ablation(const ConceptDataset& data, const TrainConfig& base,
                                      const Probe& probe, int64_t n_seeds,
                                      const BenchmarkConfig& bc) {
    if (n_seeds < 1) fail(Errc::invalid_argument, "ablation needs at least one seed");
    std::vector<AblationRow> rows(3);
    rows[0].label = "full";
    rows[0].weights = {1.0, 1.0, base.weights.form};
    rows[1].label = "wo_iso";
    rows[1].weights = {0.0, 1.0, base.weights.form};
    rows[2].label = "wo_dec";
    rows[2].weights = {1.0, 0.0, base.weights.form};

    for (AblationRow& row : rows) {
        TrainConfig cfg = base;  // only the loss weights differ between rows
        cfg.weights = row.weights;
        seed_scores(data, cfg, probe, n_seeds, bc, row.per_seed_v, row.per_seed_vo);
        row.mean_v = mean_of(row.per_seed_v);
        row.std_v = sample_std(row.per_seed_v);
        row.mean_vo = mean_of(row.per_seed_vo);
        row.std_vo = sample_std(row.per_seed_vo);
    }
    return rows;
}

void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path) {
    std::string text =
        "setting,lambda_iso,lambda_dec,mean_proxy_v,std_proxy_v,mean_proxy_vo,std_proxy_vo,seeds\n";
    for (const AblationRow& r : rows)
        text += r.label + "," + fmt(r.weights.lambda_iso) + "," + fmt(r.weights.lambda_dec) + "," +
                fmt(r.mean_v) + "," + fmt(r.std_v) + "," + fmt(r.mean_vo) + "," + fmt(r.std_vo) +
                "," + std::to_string(r.per_seed_v.size()) + "\n";
    write_text_file(path, text);
}

std::vector<SweepCell> run_sweep(const ConceptDataset& data, const TrainConfig& base,
                                 const Probe& probe, const std::vector<double>& grid,
                                 int64_t n_seeds, const BenchmarkConfig& bc) {
    if (grid.empty()) fail(Errc::invalid_argument, "empty sweep grid");
    if (n_seeds < 1) fail(Errc::invalid_argument, "sweep needs at least one seed");
    std::vector<SweepCell> cells;
    for (double li : grid)
        for (double ld : grid) {
            SweepCell cell;
            cell.lambda_iso = li;
            cell.lambda_dec = ld;
            TrainConfig cfg = base;
            cfg.weights.lambda_iso = li;
            cfg.weights.lambda_dec = ld;
            std::vector<double> v_scores;
            seed_scores(data, cfg, probe, n_seeds, bc, v_scores, cell.per_seed_vo);
            cell.mean_vo = mean_of(cell.per_seed_vo);
            cells.push_back(std::move(cell));
        }
    return cells;
}

void write_sweep_csv(const std::vector<SweepCell>& cells, const std::string& path) {
    std::string text = "lambda_iso,lambda_dec,mean_proxy_vo,seeds\n";
    for (const SweepCell& c : cells)
        text += fmt(c.lambda_iso) + "," + fmt(c.lambda_dec) + "," + fmt(c.mean_vo) + "," +
                std::to_string(c.per_seed_vo.size()) + "\n";
    write_text_file(path, text);
}

} // namespace phyc
