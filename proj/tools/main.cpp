#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <json.hpp>
#include <set>
#include <string>
#include <vector>

#include "phyc/checkpoint.hpp"
#include "phyc/dataset.hpp"
#include "phyc/diffusion.hpp"
#include "phyc/evalbench.hpp"
#include "phyc/lora.hpp"
#include "phyc/losses.hpp"
#include "phyc/png_io.hpp"
#include "phyc/text_encoder.hpp"
#include "phyc/threading.hpp"
#include "phyc/trainer.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace phyc;

namespace {

std::string one_line(std::string s) {
    std::replace(s.begin(), s.end(), '\n', ' ');
    return s;
}

json load_config(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) fail(Errc::io_error, "cannot open config " + path);
    std::string text((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        fail(Errc::format_error,
             "config " + path + ": parse error at byte " + std::to_string(e.byte) + ": " +
                 one_line(e.what()));
    }
}

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
    if (!j.is_object()) fail(Errc::invalid_argument, "config block " + where + " must be an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            fail(Errc::invalid_argument,
                 "unknown config key \"" + (where.empty() ? it.key() : where + "." + it.key()) +
                     "\"");
}

template <class T>
T jget(const json& j, const std::string& key) {
    try {
        return j.at(key).get<T>();
    } catch (const json::exception& e) {
        fail(Errc::invalid_argument, "config key \"" + key + "\": " + one_line(e.what()));
    }
}

// assign from json only when the key is present
template <class T>
void ji(const json& j, const char* key, T& var) {
    if (j.contains(key)) var = jget<T>(j, key);
}

// flag wins over json over default
template <class T>
void resolve(const CLI::Option* opt, const json& j, const char* key, T& var) {
    if (opt->count() > 0) return;
    ji(j, key, var);
}

const std::set<std::string> kDenKeys = {"height",     "width", "patch_size", "d_model", "n_blocks",
                                        "mlp_hidden", "d_txt", "l_max",      "T"};
const std::set<std::string> kTextKeys = {"l_max", "d_txt", "mlp_hidden"};

void apply_den(const json& j, DenoiserConfig& d) {
    check_keys(j, kDenKeys, "den");
    ji(j, "height", d.height);
    ji(j, "width", d.width);
    ji(j, "patch_size", d.patch_size);
    ji(j, "d_model", d.d_model);
    ji(j, "n_blocks", d.n_blocks);
    ji(j, "mlp_hidden", d.mlp_hidden);
    ji(j, "d_txt", d.d_txt);
    ji(j, "l_max", d.l_max);
    ji(j, "T", d.T);
}

void apply_text(const json& j, TextConfig& t) {
    check_keys(j, kTextKeys, "text");
    ji(j, "l_max", t.l_max);
    ji(j, "d_txt", t.d_txt);
    ji(j, "mlp_hidden", t.mlp_hidden);
}

const std::set<std::string> kCfgKeys = {"steps",      "batch",      "rank",          "lr",
                                        "seed",       "dropout",    "lambda_iso",    "lambda_dec",
                                        "decouple_form", "den",     "text"};

ordered_json cfg_to_json(const TrainConfig& c) {
    ordered_json j;
    j["steps"] = c.steps;
    j["batch"] = c.batch;
    j["rank"] = c.rank;
    j["lr"] = c.lr;
    j["seed"] = c.seed;
    j["dropout"] = c.dropout;
    j["lambda_iso"] = c.weights.lambda_iso;
    j["lambda_dec"] = c.weights.lambda_dec;
    j["decouple_form"] = decouple_form_name(c.weights.form);
    j["den"] = {{"height", c.den.height},         {"width", c.den.width},
                {"patch_size", c.den.patch_size}, {"d_model", c.den.d_model},
                {"n_blocks", c.den.n_blocks},     {"mlp_hidden", c.den.mlp_hidden},
                {"d_txt", c.den.d_txt},           {"l_max", c.den.l_max},
                {"T", c.den.T}};
    j["text"] = {{"l_max", c.text.l_max}, {"d_txt", c.text.d_txt}, {"mlp_hidden", c.text.mlp_hidden}};
    return j;
}

void apply_cfg_json(const json& j, TrainConfig& c) {
    check_keys(j, kCfgKeys, "cfg");
    ji(j, "steps", c.steps);
    ji(j, "batch", c.batch);
    ji(j, "rank", c.rank);
    ji(j, "lr", c.lr);
    ji(j, "seed", c.seed);
    ji(j, "dropout", c.dropout);
    ji(j, "lambda_iso", c.weights.lambda_iso);
    ji(j, "lambda_dec", c.weights.lambda_dec);
    if (j.contains("decouple_form"))
        c.weights.form = decouple_form_from_name(jget<std::string>(j, "decouple_form"));
    if (j.contains("den")) apply_den(j.at("den"), c.den);
    if (j.contains("text")) apply_text(j.at("text"), c.text);
}

// everything eval/sample need to rebuild a run from its checkpoint
ordered_json train_meta(const TrainConfig& cfg, const std::string& object,
                        const std::string& physics, const Vocabulary& vocab, uint32_t crc) {
    ordered_json meta;
    meta["kind"] = "train";
    meta["object"] = object;
    meta["physics"] = physics;
    meta["manifest_crc"] = crc;
    meta["vocab"] = vocab.tokens;
    meta["cfg"] = cfg_to_json(cfg);
    return meta;
}

struct DecodedCheckpoint {
    TrainerState state;
    TrainConfig cfg;
    Vocabulary vocab;
    std::string object, physics;
    uint32_t manifest_crc = 0;
};

DecodedCheckpoint decode_checkpoint(const std::string& path) {
    DecodedCheckpoint d;
    d.state = load_checkpoint(path);
    json meta;
    try {
        meta = json::parse(d.state.config_json);
    } catch (const json::parse_error&) {
        fail(Errc::format_error, path + " carries no readable run metadata");
    }
    if (meta.value("kind", "") != "train")
        fail(Errc::format_error, path + " is not a training checkpoint");
    apply_cfg_json(meta.at("cfg"), d.cfg);
    d.vocab = make_vocabulary(jget<std::vector<std::string>>(meta, "vocab"));
    d.object = jget<std::string>(meta, "object");
    d.physics = jget<std::string>(meta, "physics");
    d.manifest_crc = jget<uint32_t>(meta, "manifest_crc");
    return d;
}

void write_lock(const fs::path& dir, const ordered_json& j) {
    if (!dir.empty()) fs::create_directories(dir);
    const fs::path path = dir / "config.lock.json";
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << j.dump(2) << "\n";
    f.flush();
    if (!f) fail(Errc::io_error, "cannot write " + path.string());
}

fs::path dir_of(const std::string& file_path) {
    const fs::path p = fs::path(file_path).parent_path();
    return p.empty() ? fs::path(".") : p;
}

std::vector<uint8_t> quantize(const TensorData& img) {
    std::vector<uint8_t> bytes(img.data.size());
    for (size_t i = 0; i < bytes.size(); ++i) bytes[i] = latent_to_byte(img.data[i]);
    return bytes;
}

std::vector<double> parse_grid(const std::string& text) {
    std::vector<double> grid;
    std::string cur;
    std::stringstream ss(text);
    while (std::getline(ss, cur, ',')) {
        if (cur.empty()) continue;
        size_t pos = 0;
        double v;
        try {
            v = std::stod(cur, &pos);
        } catch (const std::exception&) {
            fail(Errc::invalid_argument, "bad grid value \"" + cur + "\"");
        }
        if (pos != cur.size()) fail(Errc::invalid_argument, "bad grid value \"" + cur + "\"");
        grid.push_back(v);
    }
    if (grid.empty()) fail(Errc::invalid_argument, "empty lambda grid");
    return grid;
}

std::string ci_string(double acc, int64_t n) {
    const int64_t k = static_cast<int64_t>(std::lround(acc * static_cast<double>(n)));
    const auto [lo, hi] = wilson95(k, n);
    char buf[96];
    std::snprintf(buf, sizeof buf, "%.4f (95%% CI %.4f-%.4f, n=%lld)", acc, lo, hi,
                  static_cast<long long>(n));
    return buf;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{
        "physics-concept customization for a pixel-space diffusion model.\n"
        "Every subcommand accepts --config FILE (JSON mirroring its flags; flags win)\n"
        "and writes the resolved settings to config.lock.json in its output directory.\n"
        "PHYC_THREADS caps the worker count (default: logical cores)."};
    app.option_defaults()->always_capture_default();
    app.require_subcommand(1);
    std::string config_path;

    // ---- gen-data ----
    auto* gen = app.add_subcommand("gen-data", "generate the synthetic shape corpus");
    std::string gen_out;
    CorpusConfig cc;
    gen->add_option("--config", config_path, "JSON config file");
    gen->add_option("--out", gen_out, "output dataset directory")->required();
    auto* o_objects = gen->add_option("--objects", cc.n_objects, "number of object classes");
    auto* o_gseed = gen->add_option("--seed", cc.seed, "corpus seed");
    auto* o_size = gen->add_option("--size", cc.size, "image side length");
    auto* o_jitter = gen->add_option("--severity-jitter", cc.severity_jitter,
                                     "severity spread around the 0.5 center");
    auto* o_variants = gen->add_option("--variants", cc.variants_per_cell,
                                       "renders per (object, transform) cell");
    gen->callback([&] {
        json j = config_path.empty() ? json::object() : load_config(config_path);
        check_keys(j, {"out", "objects", "seed", "size", "severity_jitter", "variants"}, "");
        resolve(o_objects, j, "objects", cc.n_objects);
        resolve(o_gseed, j, "seed", cc.seed);
        resolve(o_size, j, "size", cc.size);
        resolve(o_jitter, j, "severity_jitter", cc.severity_jitter);
        resolve(o_variants, j, "variants", cc.variants_per_cell);
        const Manifest m = generate_corpus(gen_out, cc);
        write_lock(gen_out, ordered_json{{"command", "gen-data"},
                                         {"out", gen_out},
                                         {"objects", cc.n_objects},
                                         {"size", cc.size},
                                         {"variants", cc.variants_per_cell},
                                         {"severity_jitter", cc.severity_jitter},
                                         {"seed", cc.seed}});
        std::cout << "wrote " << m.items.size() << " items to " << gen_out << "\n";
    });

    // ---- train ----
    auto* train = app.add_subcommand("train", "fine-tune both concept branches on one combination");
    std::string tr_data, tr_object, tr_physics, tr_out, tr_form = "cos_sq";
    TrainConfig tc;
    train->add_option("--config", config_path, "JSON config file");
    train->add_option("--data", tr_data, "dataset directory")->required();
    train->add_option("--object", tr_object, "target object name")->required();
    train->add_option("--physics", tr_physics, "physics concept name")->required();
    train->add_option("--out", tr_out, "checkpoint output path")->required();
    auto* o_steps = train->add_option("--steps", tc.steps, "optimization steps");
    auto* o_lr = train->add_option("--lr", tc.lr, "AdamW learning rate");
    auto* o_batch = train->add_option("--batch", tc.batch, "batch size");
    auto* o_rank = train->add_option("--rank", tc.rank, "LoRA rank");
    auto* o_liso = train->add_option("--lambda-iso", tc.weights.lambda_iso, "isometric loss weight");
    auto* o_ldec = train->add_option("--lambda-dec", tc.weights.lambda_dec, "decouple loss weight");
    auto* o_form = train->add_option("--decouple-form", tr_form, "cos, cos_sq, or cos_abs");
    auto* o_tseed = train->add_option("--seed", tc.seed, "training seed");
    train->callback([&] {
        json j = config_path.empty() ? json::object() : load_config(config_path);
        check_keys(j, [] {
            auto k = kCfgKeys;
            k.insert({"data", "object", "physics", "out"});
            return k;
        }(), "");
        resolve(o_steps, j, "steps", tc.steps);
        resolve(o_lr, j, "lr", tc.lr);
        resolve(o_batch, j, "batch", tc.batch);
        resolve(o_rank, j, "rank", tc.rank);
        resolve(o_liso, j, "lambda_iso", tc.weights.lambda_iso);
        resolve(o_ldec, j, "lambda_dec", tc.weights.lambda_dec);
        resolve(o_form, j, "decouple_form", tr_form);
        resolve(o_tseed, j, "seed", tc.seed);
        ji(j, "dropout", tc.dropout);
        if (j.contains("den")) apply_den(j.at("den"), tc.den);
        if (j.contains("text")) apply_text(j.at("text"), tc.text);
        ji(j, "data", tr_data);
        ji(j, "object", tr_object);
        ji(j, "physics", tr_physics);
        ji(j, "out", tr_out);
        tc.weights.form = decouple_form_from_name(tr_form);

        fs::create_directories(dir_of(tr_out));
        const Manifest m = read_manifest(tr_data);
        const uint32_t crc = manifest_crc32(tr_data);
        Rng rng(Rng::mix(tc.seed, 0x1eaf));
        const ConceptDataset data = build_concept_dataset(m, tr_data, tr_object, tr_physics, rng);
        const ordered_json meta = train_meta(tc, tr_object, tr_physics, data.vocab, crc);
        TrainerState st =
            init_trainer(tc, static_cast<int64_t>(data.vocab.size()), meta.dump());
        const std::string csv = fs::path(tr_out).replace_extension(".loss.csv").string();
        run_training(st, tc, data, csv, tr_out);

        ordered_json lock = cfg_to_json(tc);
        lock["command"] = "train";
        lock["data"] = tr_data;
        lock["object"] = tr_object;
        lock["physics"] = tr_physics;
        lock["out"] = tr_out;
        lock["loss_csv"] = csv;
        write_lock(dir_of(tr_out), lock);
        std::cout << "trained " << st.step << " steps on " << tr_object << "+" << tr_physics
                  << " -> " << tr_out << "\n";
    });

    // ---- sample ----
    auto* smp = app.add_subcommand("sample", "draw guided samples from a trained checkpoint");
    std::string sm_ckpt, sm_object, sm_physics, sm_out;
    int64_t sm_n = 20;
    SampleConfig sm_sc;
    smp->add_option("--config", config_path, "JSON config file");
    smp->add_option("--ckpt", sm_ckpt, "checkpoint path")->required();
    smp->add_option("--object", sm_object, "object word for the prompt")->required();
    smp->add_option("--physics", sm_physics, "physics word (for bookkeeping)")->required();
    smp->add_option("--out", sm_out, "output directory")->required();
    auto* o_n = smp->add_option("--n", sm_n, "number of samples");
    auto* o_ssteps = smp->add_option("--steps", sm_sc.n_steps, "sampling steps");
    auto* o_guidance = smp->add_option("--guidance", sm_sc.guidance, "classifier-free scale");
    auto* o_sseed = smp->add_option("--seed", sm_sc.seed, "base sampling seed");
    smp->callback([&] {
        json j = config_path.empty() ? json::object() : load_config(config_path);
        check_keys(j, {"ckpt", "object", "physics", "out", "n", "steps", "guidance", "seed"}, "");
        resolve(o_n, j, "n", sm_n);
        resolve(o_ssteps, j, "steps", sm_sc.n_steps);
        resolve(o_guidance, j, "guidance", sm_sc.guidance);
        resolve(o_sseed, j, "seed", sm_sc.seed);
        ji(j, "ckpt", sm_ckpt);
        ji(j, "object", sm_object);
        ji(j, "physics", sm_physics);
        ji(j, "out", sm_out);
        if (sm_n < 1) fail(Errc::invalid_argument, "need at least one sample");

        const DecodedCheckpoint d = decode_checkpoint(sm_ckpt);
        const PromptTokens tokens =
            tokenize("a photo of [V] [O] " + sm_object, d.vocab, d.cfg.text.l_max);
        const PromptTokens pad(static_cast<size_t>(d.cfg.text.l_max), kPadId);
        const TensorData cond = encode(tokens, d.state.params, d.cfg.text);
        const TensorData uncond = encode(pad, d.state.params, d.cfg.text);
        const DiffusionSchedule sched = make_schedule(d.cfg.den.T);
        const auto hosts = lora_host_names(d.cfg.den);
        fs::create_directories(sm_out);

        std::vector<TensorData> images(static_cast<size_t>(sm_n));
        parallel_for(sm_n, [&](int64_t i) {
            Binder w =
                lora_binder(d.state.params, hosts, BranchConfig::both(), BranchConfig::none());
            SampleConfig sc = sm_sc;
            sc.seed = Rng::mix(sm_sc.seed, static_cast<uint64_t>(i));
            images[static_cast<size_t>(i)] = sample(w, d.cfg.den, sched, cond, tokens, uncond, pad, sc);
        });
        for (int64_t i = 0; i < sm_n; ++i) {
            char name[32];
            std::snprintf(name, sizeof name, "sample_%03lld.png", static_cast<long long>(i));
            write_png_gray((fs::path(sm_out) / name).string(), d.cfg.den.width, d.cfg.den.height,
                           quantize(images[static_cast<size_t>(i)]));
        }
        write_lock(sm_out, ordered_json{{"command", "sample"},
                                        {"ckpt", sm_ckpt},
                                        {"object", sm_object},
                                        {"physics", sm_physics},
                                        {"n", sm_n},
                                        {"steps", sm_sc.n_steps},
                                        {"guidance", sm_sc.guidance},
                                        {"seed", sm_sc.seed},
                                        {"out", sm_out}});
        std::cout << "wrote " << sm_n << " samples to " << sm_out << "\n";
    });

    // ---- probe-train ----
    auto* pt = app.add_subcommand("probe-train", "train and freeze the evaluation probe");
    std::string pt_data, pt_out;
    ProbeConfig pc;
    pt->add_option("--config", config_path, "JSON config file");
    pt->add_option("--data", pt_data, "dataset directory")->required();
    pt->add_option("--out", pt_out, "probe output path")->required();
    pt->callback([&] {
        json j = config_path.empty() ? json::object() : load_config(config_path);
        check_keys(j,
                   {"data", "out", "hidden", "steps", "batch", "lr", "noise_sigma", "none_items",
                    "min_accuracy", "seed"},
                   "");
        ji(j, "hidden", pc.hidden);
        ji(j, "steps", pc.steps);
        ji(j, "batch", pc.batch);
        ji(j, "lr", pc.lr);
        ji(j, "noise_sigma", pc.noise_sigma);
        ji(j, "none_items", pc.none_items);
        ji(j, "min_accuracy", pc.min_accuracy);
        ji(j, "seed", pc.seed);
        ji(j, "data", pt_data);
        ji(j, "out", pt_out);
        fs::create_directories(dir_of(pt_out));
        const Probe p = train_probe(pt_data, pc);
        save_probe(p, pt_out);
        write_lock(dir_of(pt_out), ordered_json{{"command", "probe-train"},
                                                {"data", pt_data},
                                                {"out", pt_out},
                                                {"hidden", pc.hidden},
                                                {"steps", pc.steps},
                                                {"batch", pc.batch},
                                                {"lr", pc.lr},
                                                {"noise_sigma", pc.noise_sigma},
                                                {"none_items", pc.none_items},
                                                {"min_accuracy", pc.min_accuracy},
                                                {"seed", pc.seed}});
        std::cout << "object accuracy " << ci_string(p.object_accuracy, p.heldout_count) << "\n"
                  << "physics accuracy " << ci_string(p.physics_accuracy, p.heldout_count) << "\n"
                  << "probe -> " << pt_out << "\n";
    });

    // ---- eval ----
    auto* ev = app.add_subcommand("eval", "benchmark every checkpoint in a directory");
    std::string ev_dir, ev_probe, ev_out;
    BenchmarkConfig ev_bc;
    ev->add_option("--config", config_path, "JSON config file");
    ev->add_option("--ckpt-dir", ev_dir, "directory of .ckpt files")->required();
    ev->add_option("--probe", ev_probe, "frozen probe path")->required();
    ev->add_option("--out", ev_out, "results CSV path")->required();
    auto* o_eseeds = ev->add_option("--seeds", ev_bc.seeds, "samples per combination");
    ev->callback([&] {
        json j = config_path.empty() ? json::object() : load_config(config_path);
        check_keys(j, {"ckpt_dir", "probe", "out", "seeds", "sample_steps", "guidance", "base_seed"},
                   "");
        resolve(o_eseeds, j, "seeds", ev_bc.seeds);
        ji(j, "sample_steps", ev_bc.sample_steps);
        ji(j, "guidance", ev_bc.guidance);
        ji(j, "base_seed", ev_bc.base_seed);
        ji(j, "ckpt_dir", ev_dir);
        ji(j, "probe", ev_probe);
        ji(j, "out", ev_out);

        if (!fs::is_directory(ev_dir)) fail(Errc::io_error, ev_dir + " is not a directory");
        std::vector<std::string> paths;
        for (const auto& entry : fs::directory_iterator(ev_dir))
            if (entry.is_regular_file() && entry.path().extension() == ".ckpt")
                paths.push_back(entry.path().string());
        std::sort(paths.begin(), paths.end());
        if (paths.empty()) fail(Errc::io_error, "no .ckpt files in " + ev_dir);

        const Probe probe = load_probe(ev_probe);
        std::vector<EvalEntry> entries;
        for (const std::string& p : paths) {
            DecodedCheckpoint d = decode_checkpoint(p);
            entries.push_back({std::move(d.state), d.cfg, std::move(d.vocab), d.object, d.physics,
                               d.manifest_crc});
        }
        const BenchmarkResult r = run_benchmark(entries, probe, ev_bc);
        write_benchmark_csv(r, ev_out);
        for (const SampleSet& s : r.combos)
            write_contact_sheet(s, (dir_of(ev_out) / ("sheet_" + s.object + "_" + s.physics + ".png"))
                                       .string());
        write_lock(dir_of(ev_out), ordered_json{{"command", "eval"},
                                                {"ckpt_dir", ev_dir},
                                                {"probe", ev_probe},
                                                {"out", ev_out},
                                                {"seeds", ev_bc.seeds},
                                                {"sample_steps", ev_bc.sample_steps},
                                                {"guidance", ev_bc.guidance},
                                                {"base_seed", ev_bc.base_seed}});
        std::cout << "mean Proxy-V " << r.mean_v << ", mean Proxy-V-O " << r.mean_vo << " over "
                  << r.combos.size() << " combinations -> " << ev_out << "\n";
    });

    // ---- ablate ----
    auto* ab = app.add_subcommand("ablate", "full / w/o-isometric / w/o-decouple comparison");
    std::string ab_data, ab_object, ab_physics, ab_probe, ab_out, ab_form = "cos_sq";
    int64_t ab_seeds = 5;
    TrainConfig ab_base;
    BenchmarkConfig ab_bc;
    ab->add_option("--config", config_path, "JSON config file");
    ab->add_option("--data", ab_data, "dataset directory")->required();
    ab->add_option("--object", ab_object, "target object name")->required();
    ab->add_option("--physics", ab_physics, "physics concept name")->required();
    ab->add_option("--probe", ab_probe, "frozen probe path")->required();
    ab->add_option("--out", ab_out, "ablation CSV path")->required();
    auto* o_abseeds = ab->add_option("--seeds", ab_seeds, "training seeds per row");
    ab->callback([&] {
        json j = config_path.empty() ? json::object() : load_config(config_path);
        check_keys(j, [] {
            auto k = kCfgKeys;
            k.erase("lambda_iso");  // the rows own the lambdas
            k.erase("lambda_dec");
            k.insert({"data", "object", "physics", "probe", "out", "seeds", "sample_seeds",
                      "sample_steps", "guidance", "base_seed"});
            return k;
        }(), "");
        resolve(o_abseeds, j, "seeds", ab_seeds);
        ji(j, "steps", ab_base.steps);
        ji(j, "batch", ab_base.batch);
        ji(j, "rank", ab_base.rank);
        ji(j, "lr", ab_base.lr);
        ji(j, "seed", ab_base.seed);
        ji(j, "dropout", ab_base.dropout);
        if (j.contains("decouple_form"))
            ab_form = jget<std::string>(j, "decouple_form");
        if (j.contains("den")) apply_den(j.at("den"), ab_base.den);
        if (j.contains("text")) apply_text(j.at("text"), ab_base.text);
        ji(j, "sample_seeds", ab_bc.seeds);
        ji(j, "sample_steps", ab_bc.sample_steps);
        ji(j, "guidance", ab_bc.guidance);
        ji(j, "base_seed", ab_bc.base_seed);
        ji(j, "data", ab_data);
        ji(j, "object", ab_object);
        ji(j, "physics", ab_physics);
        ji(j, "probe", ab_probe);
        ji(j, "out", ab_out);
        ab_base.weights.form = decouple_form_from_name(ab_form);

        const Manifest m = read_manifest(ab_data);
        Rng rng(Rng::mix(ab_base.seed, 0x1eaf));
        const ConceptDataset data = build_concept_dataset(m, ab_data, ab_object, ab_physics, rng);
        const Probe probe = load_probe(ab_probe);
        const auto rows = run_ablation(data, ab_base, probe, ab_seeds, ab_bc);
        write_ablation_csv(rows, ab_out);
        ordered_json lock = cfg_to_json(ab_base);
        lock["command"] = "ablate";
        lock["data"] = ab_data;
        lock["object"] = ab_object;
        lock["physics"] = ab_physics;
        lock["probe"] = ab_probe;
        lock["out"] = ab_out;
        lock["seeds"] = ab_seeds;
        lock["sample_seeds"] = ab_bc.seeds;
        lock["sample_steps"] = ab_bc.sample_steps;
        lock.erase("lambda_iso");
        lock.erase("lambda_dec");
        write_lock(dir_of(ab_out), lock);
        for (const AblationRow& r : rows)
            std::cout << r.label << ": Proxy-V " << r.mean_v << " +- " << r.std_v << ", Proxy-V-O "
                      << r.mean_vo << " +- " << r.std_vo << "\n";
        std::cout << "ablation -> " << ab_out << "\n";
    });

    // ---- sweep ----
    auto* sw = app.add_subcommand("sweep", "lambda grid over (iso, dec) loss weights");
    std::string sw_data, sw_object = "circle", sw_physics = "melt", sw_probe, sw_out;
    std::string sw_grid = "0.1,0.5,1.0,2.0", sw_form = "cos_sq";
    int64_t sw_seeds = 1;
    TrainConfig sw_base;
    BenchmarkConfig sw_bc;
    sw->add_option("--config", config_path, "JSON config file");
    sw->add_option("--data", sw_data, "dataset directory")->required();
    sw->add_option("--probe", sw_probe, "frozen probe path")->required();
    sw->add_option("--out", sw_out, "sweep CSV path")->required();
    auto* o_grid = sw->add_option("--grid", sw_grid, "comma-separated lambda values");
    auto* o_swobj = sw->add_option("--object", sw_object, "target object name");
    auto* o_swphy = sw->add_option("--physics", sw_physics, "physics concept name");
    auto* o_swseeds = sw->add_option("--seeds", sw_seeds, "training seeds per cell");
    sw->callback([&] {
        json j = config_path.empty() ? json::object() : load_config(config_path);
        check_keys(j, [] {
            auto k = kCfgKeys;
            k.erase("lambda_iso");
            k.erase("lambda_dec");
            k.insert({"data", "object", "physics", "probe", "out", "grid", "seeds", "sample_seeds",
                      "sample_steps", "guidance", "base_seed"});
            return k;
        }(), "");
        resolve(o_grid, j, "grid", sw_grid);
        resolve(o_swobj, j, "object", sw_object);
        resolve(o_swphy, j, "physics", sw_physics);
        resolve(o_swseeds, j, "seeds", sw_seeds);
        ji(j, "steps", sw_base.steps);
        ji(j, "batch", sw_base.batch);
        ji(j, "rank", sw_base.rank);
        ji(j, "lr", sw_base.lr);
        ji(j, "seed", sw_base.seed);
        ji(j, "dropout", sw_base.dropout);
        if (j.contains("decouple_form")) sw_form = jget<std::string>(j, "decouple_form");
        if (j.contains("den")) apply_den(j.at("den"), sw_base.den);
        if (j.contains("text")) apply_text(j.at("text"), sw_base.text);
        ji(j, "sample_seeds", sw_bc.seeds);
        ji(j, "sample_steps", sw_bc.sample_steps);
        ji(j, "guidance", sw_bc.guidance);
        ji(j, "base_seed", sw_bc.base_seed);
        ji(j, "data", sw_data);
        ji(j, "probe", sw_probe);
        ji(j, "out", sw_out);
        sw_base.weights.form = decouple_form_from_name(sw_form);

        const std::vector<double> grid = parse_grid(sw_grid);
        const Manifest m = read_manifest(sw_data);
        Rng rng(Rng::mix(sw_base.seed, 0x1eaf));
        const ConceptDataset data = build_concept_dataset(m, sw_data, sw_object, sw_physics, rng);
        const Probe probe = load_probe(sw_probe);
        const auto cells = run_sweep(data, sw_base, probe, grid, sw_seeds, sw_bc);
        write_sweep_csv(cells, sw_out);
        ordered_json lock = cfg_to_json(sw_base);
        lock["command"] = "sweep";
        lock["data"] = sw_data;
        lock["object"] = sw_object;
        lock["physics"] = sw_physics;
        lock["probe"] = sw_probe;
        lock["out"] = sw_out;
        lock["grid"] = sw_grid;
        lock["seeds"] = sw_seeds;
        lock.erase("lambda_iso");
        lock.erase("lambda_dec");
        write_lock(dir_of(sw_out), lock);
        std::cout << cells.size() << " cells -> " << sw_out << "\n";
    });

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: cli " << one_line(e.what()) << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << errc_name(e.code()) << " " << one_line(e.message()) << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal " << one_line(e.what()) << "\n";
        return 1;
    }
    return 0;
}
