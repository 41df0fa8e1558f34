#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "phyc/rng.hpp"
#include "phyc/tensor.hpp"
#include "phyc/text_encoder.hpp"

namespace phyc {

struct ObjectSpec {
    std::string name;
    double cx = 0.0, cy = 0.0;   // center in [-1,1] coords
    double scale = 0.8;          // shape radius in the same coords
    double intensity = 1.0;      // foreground brightness multiplier
};

const std::vector<std::string>& object_registry();   // the eight shape names
const std::vector<std::string>& physics_registry();  // the six transform names

struct PhysicsTransform {
    std::string name;
    double severity = 0.6;
    uint64_t seed = 0;
};

// Antialiased SDF rendering: background -1, foreground near +1.
TensorData rasterize_object(const ObjectSpec& spec, int64_t size = 16);

TensorData apply_physics(const TensorData& img, const PhysicsTransform& t);

struct DataItem {
    std::string png_path;  // relative to the dataset root
    std::string prompt;
    std::string role;      // "object" | "physics"
    std::string transform; // "none" for clean renders
    double severity = 0.0;
    uint64_t seed = 0;
};

struct Manifest {
    std::vector<std::string> vocabulary;
    std::vector<std::string> objects;
    std::vector<std::string> physics;
    std::vector<DataItem> items;
};

struct CorpusConfig {
    int64_t n_objects = 8;
    int64_t size = 16;
    int64_t variants_per_cell = 24;
    double severity_jitter = 0.2;
    uint64_t seed = 0;
};

// Full grid corpus: every object x {clean + six transforms} x variants,
// written as PNGs plus manifest.json. Returns the manifest.
Manifest generate_corpus(const std::string& out_dir, const CorpusConfig& cfg);

void write_manifest(const std::string& dir, const Manifest& m);
Manifest read_manifest(const std::string& dir);

TensorData load_item_image(const std::string& dir, const DataItem& item);

struct ConceptDataset {
    std::string target_object;
    std::string physics_name;
    std::vector<std::pair<TensorData, std::string>> object_items;   // image, prompt
    std::vector<std::pair<TensorData, std::string>> physics_items;  // cross-object
    std::string anchor_prompt;
    Vocabulary vocab;
};

// Object items: clean renders of the target ("a photo of [O] <target>").
// Physics items: d different non-target objects under the transform
// ("a photo of [V] <other>"). Anchor: "a photo of [V] object".
ConceptDataset build_concept_dataset(const Manifest& m, const std::string& dir,
                                     const std::string& target, const std::string& physics,
                                     Rng& rng, int64_t n_object_items = 4, int64_t d = 3);

} // namespace phyc
