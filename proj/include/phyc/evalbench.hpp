#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "phyc/dataset.hpp"
#include "phyc/tensor.hpp"
#include "phyc/trainer.hpp"

namespace phyc {

// --- probe classifier -------------------------------------------------------
// Frozen evaluation oracle: a two-head MLP over the flattened image, trained
// on the full synthetic grid and refused outright if it cannot separate it.

struct ProbeConfig {
    int64_t hidden = 128;
    int64_t steps = 10000;
    int64_t batch = 128;
    double lr = 1e-3;
    double noise_sigma = 0.05;  // input jitter during training only
    int64_t none_items = 48;    // fabricated blank/noise rows for the "none" class
    double min_accuracy = 0.95;
    uint64_t seed = 0;
};

struct Probe {
    ParamStore params;                        // probe.* tensors
    std::vector<std::string> object_classes;  // dataset objects + "none"
    std::vector<std::string> physics_classes; // dataset physics + "none"
    int64_t input_size = 16;                  // image side length
    uint32_t manifest_crc = 0;                // dataset the probe was trained on
    double object_accuracy = 0, physics_accuracy = 0;  // held-out
    int64_t heldout_count = 0;
};

struct ProbeOutput {
    std::vector<double> object_probs;   // |object_classes|, sums to 1
    std::vector<double> physics_probs;  // |physics_classes|, sums to 1
};

// Double-precision forward pass; softmax heads.
ProbeOutput probe_forward(const Probe& p, const TensorData& img);

// CRC32 of <dir>/manifest.json, the identity the probe is pinned to.
uint32_t manifest_crc32(const std::string& dir);

// Trains on the grid corpus (held-out split: every sixth item), refuses with
// an error when either head's held-out accuracy is below cfg.min_accuracy.
Probe train_probe(const std::string& data_dir, const ProbeConfig& cfg);

void save_probe(const Probe& p, const std::string& path);
Probe load_probe(const std::string& path);

// Wilson 95% score interval for k successes in n trials.
std::pair<double, double> wilson95(int64_t k, int64_t n);

// --- proxy metrics ----------------------------------------------------------

struct ProxyScores {
    double v = 0;   // physics-head probability of the target transform
    double vo = 0;  // v times the object-head probability of the target object
};

ProxyScores proxy_scores(const ProbeOutput& out, int64_t object_idx, int64_t physics_idx);
ProxyScores proxy_scores(const Probe& p, const TensorData& img, const std::string& object_name,
                         const std::string& physics_name);

// --- benchmark / ablation / sweep -------------------------------------------

struct BenchmarkConfig {
    int64_t seeds = 20;        // samples per combination
    int64_t sample_steps = 50;
    double guidance = 7.5;
    uint64_t base_seed = 0;    // per-sample seed = mix(base_seed, index)
};

struct SampleSet {
    std::string object, physics;
    std::vector<TensorData> images;
    std::vector<double> proxy_v, proxy_vo;  // per sample
    int64_t selected = 0;                   // argmax proxy_v
    double sel_v = 0, sel_vo = 0;           // the selected image's scores
};

// Samples bc.seeds images from a trained state with the prompt
// "a photo of [V] [O] <object>", scores each with the probe, and selects the
// best by Proxy-V. Pure function of (state, probe, seeds).
SampleSet evaluate_state(const TrainerState& st, const TrainConfig& cfg, const Vocabulary& vocab,
                         const std::string& object, const std::string& physics, const Probe& probe,
                         const BenchmarkConfig& bc);

struct EvalEntry {
    TrainerState state;
    TrainConfig cfg;
    Vocabulary vocab;
    std::string object, physics;
    uint32_t manifest_crc = 0;  // 0 = unchecked
};

struct BenchmarkResult {
    std::vector<SampleSet> combos;
    double mean_v = 0, mean_vo = 0;  // means of the selected scores over combos
};

// One row per entry; rejects entries whose dataset hash disagrees with the
// probe's.
BenchmarkResult run_benchmark(const std::vector<EvalEntry>& entries, const Probe& probe,
                              const BenchmarkConfig& bc);
void write_benchmark_csv(const BenchmarkResult& r, const std::string& path);

// Tiled grid of a combination's samples as one grayscale PNG.
void write_contact_sheet(const SampleSet& s, const std::string& path, int64_t cols = 5);

struct AblationRow {
    std::string label;  // "full" | "wo_iso" | "wo_dec"
    LossWeights weights;
    std::vector<double> per_seed_v, per_seed_vo;  // selected scores per training seed
    double mean_v = 0, std_v = 0, mean_vo = 0, std_vo = 0;
};

// Trains n_seeds models per row (full, without isometric, without decouple) on
// the same seed set and reports mean +/- sample std of the selected scores.
std::vector<AblationRow> run_ablation(const ConceptDataset& data, const TrainConfig& base,
                                      const Probe& probe, int64_t n_seeds,
                                      const BenchmarkConfig& bc);
void write_ablation_csv(const std::vector<AblationRow>& rows, const std::string& path);

struct SweepCell {
    double lambda_iso = 0, lambda_dec = 0;
    std::vector<double> per_seed_vo;
    double mean_vo = 0;
};

// Full grid x grid surface; one row per (lambda_iso, lambda_dec) cell.
std::vector<SweepCell> run_sweep(const ConceptDataset& data, const TrainConfig& base,
                                 const Probe& probe, const std::vector<double>& grid,
                                 int64_t n_seeds, const BenchmarkConfig& bc);
void write_sweep_csv(const std::vector<SweepCell>& cells, const std::string& path);

} // namespace phyc
