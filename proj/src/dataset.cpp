#include "phyc/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <set>

#include <json.hpp>

#include "phyc/png_io.hpp"
#include "phyc/threading.hpp"

namespace fs = std::filesystem;

namespace phyc {

const std::vector<std::string>& object_registry() {
    static const std::vector<std::string> r = {"circle", "square", "triangle", "star",
                                               "bar",    "cross",  "diamond",  "crescent"};
    return r;
}

const std::vector<std::string>& physics_registry() {
    static const std::vector<std::string> r = {"melt", "burn", "expand", "dissolve", "shatter", "deform"};
    return r;
}

namespace {

double sd_box(double px, double py, double bx, double by) {
    double dx = std::abs(px) - bx, dy = std::abs(py) - by;
    double ox = std::max(dx, 0.0), oy = std::max(dy, 0.0);
    return std::sqrt(ox * ox + oy * oy) + std::min(std::max(dx, dy), 0.0);
}

double shape_sdf(const std::string& name, double px, double py) {
    double r = std::sqrt(px * px + py * py);
    double theta = std::atan2(py, px);
    if (name == "circle") return r - 0.8;
    if (name == "square") return sd_box(px, py, 0.74, 0.74);
    if (name == "triangle") {
        // equilateral, apex up (screen y grows downward)
        const double k = std::sqrt(3.0);
        const double s = 0.75;
        double x = std::abs(px) - s;
        double y = -py + s / k;
        if (x + k * y > 0.0) {
            double nx = (x - k * y) / 2.0, ny = (-k * x - y) / 2.0;
            x = nx;
            y = ny;
        }
        x -= std::clamp(x, -2.0 * s, 0.0);
        double len = std::sqrt(x * x + y * y);
        return y > 0.0 ? -len : len;
    }
    if (name == "star") {
        double R = 0.8 * (0.55 + 0.45 * std::cos(5.0 * (theta - std::numbers::pi / 2)));
        return r - R;
    }
    // wide flat slab: the only elongated silhouette in the registry
    if (name == "bar") return sd_box(px, py, 0.85, 0.32);
    if (name == "cross")
        return std::min(sd_box(px, py, 0.85, 0.3), sd_box(px, py, 0.3, 0.85));
    if (name == "diamond") return (std::abs(px) + std::abs(py)) / std::numbers::sqrt2 - 0.55;
    // disc with a bite taken out of the right side: unique concavity
    if (name == "crescent") {
        double bite = std::sqrt((px - 0.38) * (px - 0.38) + py * py) - 0.55;
        return std::max(r - 0.78, -bite);
    }
    fail(Errc::unknown_name, "no shape named " + name);
}

} // namespace

TensorData rasterize_object(const ObjectSpec& spec, int64_t size) {
    if (spec.scale <= 1e-6) fail(Errc::degenerate_input, "degenerate scale for " + spec.name);
    TensorData img = TensorData::full({size, size}, -1.0f);
    double aa = static_cast<double>(size) / 2.0;  // 1 / (pixel width in [-1,1] coords)
    bool any_fg = false;
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) {
            double u = ((static_cast<double>(x) + 0.5) / static_cast<double>(size)) * 2.0 - 1.0;
            double v = ((static_cast<double>(y) + 0.5) / static_cast<double>(size)) * 2.0 - 1.0;
            double d = shape_sdf(spec.name, (u - spec.cx) / spec.scale, (v - spec.cy) / spec.scale);
            double alpha = std::clamp(0.5 - d * spec.scale * aa, 0.0, 1.0);
            double val = -1.0 + 2.0 * alpha * spec.intensity;
            img.at(y * size + x) = static_cast<float>(std::clamp(val, -1.0, 1.0));
            if (val > -0.5) any_fg = true;
        }
    if (!any_fg) fail(Errc::degenerate_input, "empty foreground for " + spec.name);
    return img;
}

namespace {

std::vector<double> to_mass(const TensorData& img) {
    std::vector<double> m(img.data.size());
    for (size_t i = 0; i < m.size(); ++i) m[i] = (static_cast<double>(img.data[i]) + 1.0) / 2.0;
    return m;
}

TensorData from_mass(const std::vector<double>& m, const Shape& shape) {
    TensorData out = TensorData::zeros(shape);
    for (size_t i = 0; i < m.size(); ++i)
        out.data[i] = static_cast<float>(std::clamp(2.0 * m[i] - 1.0, -1.0, 1.0));
    return out;
}

std::vector<bool> fg_mask(const TensorData& img, float thresh = 0.0f) {
    std::vector<bool> m(img.data.size());
    for (size_t i = 0; i < m.size(); ++i) m[i] = img.data[i] > thresh;
    return m;
}

TensorData melt(const TensorData& img, double sev) {
    int64_t h = img.shape[0], w = img.shape[1];
    auto m = to_mass(img);
    // Blend each column toward its fully settled profile; both profiles hold
    // the same mass, so the blend conserves it exactly.
    for (int64_t x = 0; x < w; ++x) {
        double total = 0;
        for (int64_t y = 0; y < h; ++y) total += m[static_cast<size_t>(y * w + x)];
        for (int64_t y = h - 1; y >= 0; --y) {
            double fill = std::clamp(total, 0.0, 1.0);
            double settled = fill;
            total -= fill;
            size_t i = static_cast<size_t>(y * w + x);
            m[i] = (1.0 - sev) * m[i] + sev * settled;
        }
    }
    return from_mass(m, img.shape);
}

TensorData burn(const TensorData& img, double sev) {
    int64_t h = img.shape[0], w = img.shape[1];
    int64_t k = static_cast<int64_t>(std::ceil(sev * 2.0));
    if (k == 0) return img;
    auto mask = fg_mask(img);
    auto eroded = mask;
    for (int64_t pass = 0; pass < k; ++pass) {
        auto next = eroded;
        for (int64_t y = 0; y < h; ++y)
            for (int64_t x = 0; x < w; ++x) {
                size_t i = static_cast<size_t>(y * w + x);
                if (!eroded[i]) continue;
                bool edge = y == 0 || y == h - 1 || x == 0 || x == w - 1 ||
                            !eroded[i - 1] || !eroded[i + 1] ||
                            !eroded[i - static_cast<size_t>(w)] || !eroded[i + static_cast<size_t>(w)];
                if (edge) next[i] = false;
            }
        eroded = next;
    }
    TensorData out = img;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            size_t i = static_cast<size_t>(y * w + x);
            if (mask[i] && !eroded[i]) out.data[i] = -1.0f;  // burnt away
        }
    // charred rim: boundary cells of what remains
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            size_t i = static_cast<size_t>(y * w + x);
            if (!eroded[i]) continue;
            bool rim = y == 0 || y == h - 1 || x == 0 || x == w - 1 ||
                       !eroded[i - 1] || !eroded[i + 1] ||
                       !eroded[i - static_cast<size_t>(w)] || !eroded[i + static_cast<size_t>(w)];
            if (rim) out.data[i] = -0.45f;
        }
    return out;
}

TensorData expand(const TensorData& img, double sev) {
    int64_t h = img.shape[0], w = img.shape[1];
    int64_t k = static_cast<int64_t>(std::ceil(sev * 3.0));
    if (k == 0) return img;
    TensorData out = img;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            float best = -1.0f;
            for (int64_t dy = -k; dy <= k; ++dy)
                for (int64_t dx = -k; dx <= k; ++dx) {
                    int64_t yy = y + dy, xx = x + dx;
                    if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
                    best = std::max(best, img.data[static_cast<size_t>(yy * w + xx)]);
                }
            out.data[static_cast<size_t>(y * w + x)] = best;
        }
    return out;
}

TensorData dissolve(const TensorData& img, double sev, uint64_t seed) {
    Rng rng(seed);
    TensorData out = img;
    auto mask = fg_mask(img);
    for (size_t i = 0; i < out.data.size(); ++i) {
        if (!mask[i]) continue;
        if (rng.uniform() < sev) out.data[i] = -1.0f;
    }
    return out;
}

TensorData shatter(const TensorData& img, double sev, uint64_t seed) {
    int64_t h = img.shape[0], w = img.shape[1];
    Rng rng(seed);
    int64_t nfrag = static_cast<int64_t>(std::ceil(2.0 + sev * 4.0));
    double phase = rng.uniform(0.0, 2.0 * std::numbers::pi);
    // each wedge slides a little along its own bisector: cracks open between
    // pieces while the overall silhouette stays readable
    double push = 1.0 + sev * 1.5;
    std::vector<std::pair<int64_t, int64_t>> offsets;
    for (int64_t f = 0; f < nfrag; ++f) {
        double mid = 2.0 * std::numbers::pi * (static_cast<double>(f) + 0.5) /
                         static_cast<double>(nfrag) -
                     phase;
        double jx = rng.uniform(-0.5, 0.5), jy = rng.uniform(-0.5, 0.5);
        offsets.emplace_back(std::lround(push * std::cos(mid) + jx),
                             std::lround(push * std::sin(mid) + jy));
    }
    // mass-weighted centroid
    auto m = to_mass(img);
    double cx = 0, cy = 0, tot = 0;
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double mm = m[static_cast<size_t>(y * w + x)];
            cx += mm * static_cast<double>(x);
            cy += mm * static_cast<double>(y);
            tot += mm;
        }
    if (tot < 1e-9) return img;
    cx /= tot;
    cy /= tot;
    TensorData out = TensorData::full(img.shape, -1.0f);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            size_t i = static_cast<size_t>(y * w + x);
            if (m[i] < 0.05) continue;
            double theta = std::atan2(static_cast<double>(y) - cy, static_cast<double>(x) - cx) + phase;
            double tn = theta / (2.0 * std::numbers::pi);
            tn -= std::floor(tn);
            int64_t f = std::min<int64_t>(nfrag - 1, static_cast<int64_t>(tn * static_cast<double>(nfrag)));
            int64_t nx = x + offsets[static_cast<size_t>(f)].first;
            int64_t ny = y + offsets[static_cast<size_t>(f)].second;
            if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
            size_t j = static_cast<size_t>(ny * w + nx);
            out.data[j] = std::max(out.data[j], img.data[i]);
        }
    return out;
}

TensorData deform(const TensorData& img, double sev, uint64_t seed) {
    int64_t h = img.shape[0], w = img.shape[1];
    Rng rng(seed);
    double amp = sev * 3.0;
    double p1 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    double p2 = rng.uniform(0.0, 2.0 * std::numbers::pi);
    // single period across the image: a smooth sway that keeps the shape
    // connected and recognizable, unlike shatter's disjoint pieces
    const double fy = 1.0, fx = 1.0;
    TensorData out = TensorData::full(img.shape, -1.0f);
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < w; ++x) {
            double sx = static_cast<double>(x) +
                        amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(y) / static_cast<double>(h) * fy + p1);
            double sy = static_cast<double>(y) +
                        amp * std::cos(2.0 * std::numbers::pi * static_cast<double>(x) / static_cast<double>(w) * fx + p2);
            int64_t x0 = static_cast<int64_t>(std::floor(sx)), y0 = static_cast<int64_t>(std::floor(sy));
            double tx = sx - static_cast<double>(x0), ty = sy - static_cast<double>(y0);
            auto at = [&](int64_t yy, int64_t xx) -> double {
                if (yy < 0 || yy >= h || xx < 0 || xx >= w) return -1.0;
                return static_cast<double>(img.data[static_cast<size_t>(yy * w + xx)]);
            };
            double val = (1 - tx) * (1 - ty) * at(y0, x0) + tx * (1 - ty) * at(y0, x0 + 1) +
                         (1 - tx) * ty * at(y0 + 1, x0) + tx * ty * at(y0 + 1, x0 + 1);
            out.data[static_cast<size_t>(y * w + x)] = static_cast<float>(std::clamp(val, -1.0, 1.0));
        }
    return out;
}

} // namespace

TensorData apply_physics(const TensorData& img, const PhysicsTransform& t) {
    if (img.shape.size() != 2) fail(Errc::shape_mismatch, "transform input must be 2-D");
    if (t.severity < 0.0 || t.severity > 1.0)
        fail(Errc::out_of_range, "severity " + std::to_string(t.severity));
    if (t.name == "melt") return melt(img, t.severity);
    if (t.name == "burn") return burn(img, t.severity);
    if (t.name == "expand") return expand(img, t.severity);
    if (t.name == "dissolve") return dissolve(img, t.severity, t.seed);
    if (t.name == "shatter") return shatter(img, t.severity, t.seed);
    if (t.name == "deform") return deform(img, t.severity, t.seed);
    fail(Errc::unknown_name, "no transform named " + t.name);
}

// --- corpus + manifest -------------------------------------------------------

namespace {

std::vector<uint8_t> quantize(const TensorData& img) {
    std::vector<uint8_t> out(img.data.size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = latent_to_byte(img.data[i]);
    return out;
}

} // namespace

Manifest generate_corpus(const std::string& out_dir, const CorpusConfig& cfg) {
    if (cfg.n_objects < 1 || cfg.n_objects > static_cast<int64_t>(object_registry().size()))
        fail(Errc::out_of_range, "n_objects must be 1.." + std::to_string(object_registry().size()));
    fs::create_directories(fs::path(out_dir) / "images");

    Manifest m;
    m.vocabulary = default_vocabulary().tokens;
    m.objects.assign(object_registry().begin(), object_registry().begin() + cfg.n_objects);
    m.physics = physics_registry();

    std::vector<std::string> cells = {"none"};
    for (const auto& p : m.physics) cells.push_back(p);

    struct Job {
        DataItem item;
        std::string obj;
        std::string cell;
    };
    std::vector<Job> jobs;
    int64_t index = 0;
    for (const std::string& obj : m.objects)
        for (const std::string& cell : cells)
            for (int64_t k = 0; k < cfg.variants_per_cell; ++k, ++index) {
                Job j;
                j.obj = obj;
                j.cell = cell;
                j.item.png_path = "images/" + obj + "_" + cell + "_" + std::to_string(k) + ".png";
                j.item.role = (cell == "none") ? "object" : "physics";
                j.item.transform = cell;
                j.item.seed = Rng::mix(cfg.seed, static_cast<uint64_t>(index));
                j.item.prompt = (cell == "none") ? ("a photo of [O] " + obj) : ("a photo of [V] " + obj);
                jobs.push_back(std::move(j));
            }

    parallel_for(static_cast<int64_t>(jobs.size()), [&](int64_t ji) {
        Job& j = jobs[static_cast<size_t>(ji)];
        Rng rng(j.item.seed);
        ObjectSpec spec;
        spec.name = j.obj;
        spec.cx = rng.uniform(-0.1, 0.1);
        spec.cy = rng.uniform(-0.1, 0.1);
        spec.scale = rng.uniform(0.7, 0.85);
        spec.intensity = rng.uniform(0.85, 1.0);
        double severity = 0.0;
        TensorData img = rasterize_object(spec, cfg.size);
        if (j.cell != "none") {
            severity = std::clamp(0.5 + rng.uniform(-cfg.severity_jitter, cfg.severity_jitter), 0.05, 0.95);
            img = apply_physics(img, {j.cell, severity, Rng::mix(j.item.seed, 7)});
        }
        j.item.severity = severity;
        write_png_gray((fs::path(out_dir) / j.item.png_path).string(), cfg.size, cfg.size, quantize(img));
    });

    for (Job& j : jobs) m.items.push_back(std::move(j.item));
    write_manifest(out_dir, m);
    return m;
}

void write_manifest(const std::string& dir, const Manifest& m) {
    nlohmann::ordered_json j;
    j["vocabulary"] = m.vocabulary;
    j["objects"] = m.objects;
    j["physics"] = m.physics;
    j["items"] = nlohmann::ordered_json::array();
    for (const DataItem& it : m.items) {
        j["items"].push_back({{"png_path", it.png_path},
                              {"prompt", it.prompt},
                              {"role", it.role},
                              {"transform", it.transform},
                              {"severity", it.severity},
                              {"seed", it.seed}});
    }
    std::ofstream f(fs::path(dir) / "manifest.json", std::ios::binary | std::ios::trunc);
    if (!f) fail(Errc::io_error, "cannot write manifest in " + dir);
    f << j.dump(2) << "\n";
}

Manifest read_manifest(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json", std::ios::binary);
    if (!f) fail(Errc::io_error, "no manifest.json in " + dir);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(f);
    } catch (const nlohmann::json::parse_error& e) {
        fail(Errc::format_error,
             "manifest.json: parse error at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    Manifest m;
    try {
        m.vocabulary = j.at("vocabulary").get<std::vector<std::string>>();
        m.objects = j.at("objects").get<std::vector<std::string>>();
        m.physics = j.at("physics").get<std::vector<std::string>>();
        for (const auto& it : j.at("items")) {
            DataItem d;
            d.png_path = it.at("png_path").get<std::string>();
            d.prompt = it.at("prompt").get<std::string>();
            d.role = it.at("role").get<std::string>();
            d.transform = it.at("transform").get<std::string>();
            d.severity = it.at("severity").get<double>();
            d.seed = it.at("seed").get<uint64_t>();
            if (d.png_path.find("..") != std::string::npos || fs::path(d.png_path).is_absolute())
                fail(Errc::format_error, "manifest path escapes dataset dir: " + d.png_path);
            if (!fs::exists(fs::path(dir) / d.png_path))
                fail(Errc::io_error, "missing image " + d.png_path);
            m.items.push_back(std::move(d));
        }
    } catch (const nlohmann::json::exception& e) {
        fail(Errc::format_error, "manifest.json: " + std::string(e.what()));
    }
    return m;
}

TensorData load_item_image(const std::string& dir, const DataItem& item) {
    GrayImage img = read_png_gray((fs::path(dir) / item.png_path).string());
    TensorData out = TensorData::zeros({img.height, img.width});
    for (size_t i = 0; i < img.pixels.size(); ++i) out.data[i] = byte_to_latent(img.pixels[i]);
    return out;
}

ConceptDataset build_concept_dataset(const Manifest& m, const std::string& dir,
                                     const std::string& target, const std::string& physics,
                                     Rng& rng, int64_t n_object_items, int64_t d) {
    if (std::find(m.objects.begin(), m.objects.end(), target) == m.objects.end())
        fail(Errc::unknown_name, "object " + target + " not in dataset");
    if (std::find(m.physics.begin(), m.physics.end(), physics) == m.physics.end())
        fail(Errc::unknown_name, "physics " + physics + " not in dataset");
    if (static_cast<int64_t>(m.objects.size()) - 1 < d)
        fail(Errc::degenerate_input, "need at least " + std::to_string(d) + " objects besides " + target);
    if (n_object_items < 2 || n_object_items > 5)
        fail(Errc::out_of_range, "object items must be 2..5");

    auto last_word = [](const std::string& prompt) {
        size_t p = prompt.find_last_of(' ');
        return p == std::string::npos ? prompt : prompt.substr(p + 1);
    };

    ConceptDataset out;
    out.target_object = target;
    out.physics_name = physics;
    out.anchor_prompt = "a photo of [V] object";
    out.vocab = make_vocabulary(m.vocabulary);

    std::vector<const DataItem*> clean;
    for (const DataItem& it : m.items)
        if (it.transform == "none" && last_word(it.prompt) == target) clean.push_back(&it);
    if (static_cast<int64_t>(clean.size()) < n_object_items)
        fail(Errc::degenerate_input, "not enough clean items for " + target);
    std::set<size_t> chosen;
    while (static_cast<int64_t>(chosen.size()) < n_object_items)
        chosen.insert(static_cast<size_t>(rng.uniform_u64(clean.size())));
    for (size_t i : chosen)
        out.object_items.emplace_back(load_item_image(dir, *clean[i]), clean[i]->prompt);

    // d distinct non-target objects, one transformed variant each
    std::vector<std::string> others;
    for (const std::string& o : m.objects)
        if (o != target) others.push_back(o);
    for (int64_t i = static_cast<int64_t>(others.size()) - 1; i > 0; --i)
        std::swap(others[static_cast<size_t>(i)], others[static_cast<size_t>(rng.uniform_u64(static_cast<uint64_t>(i + 1)))]);
    others.resize(static_cast<size_t>(d));
    for (const std::string& other : others) {
        std::vector<const DataItem*> pool;
        for (const DataItem& it : m.items)
            if (it.transform == physics && last_word(it.prompt) == other) pool.push_back(&it);
        if (pool.empty()) fail(Errc::degenerate_input, "no " + physics + " items for " + other);
        const DataItem* pick = pool[static_cast<size_t>(rng.uniform_u64(pool.size()))];
        out.physics_items.emplace_back(load_item_image(dir, *pick), pick->prompt);
    }
    return out;
}

} // namespace phyc
