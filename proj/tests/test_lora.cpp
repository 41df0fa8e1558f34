#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "fd.hpp"
#include "phyc/denoiser.hpp"
#include "phyc/lora.hpp"

using namespace phyc;

namespace {

ParamStore toy_base() {
    // Two hosts, deliberately non-square.
    ParamStore ps;
    Rng rng(21);
    TensorData w1 = TensorData::zeros({3, 4});
    TensorData w2 = TensorData::zeros({4, 2});
    for (auto& v : w1.data) v = rng.normal_f();
    for (auto& v : w2.data) v = rng.normal_f();
    ps.set("toy.w1", w1);
    ps.set("toy.w2", w2);
    return ps;
}

const std::vector<std::string> kToyHosts = {"toy.w1", "toy.w2"};

} // namespace

TEST_CASE("attach initializes so the merged weight equals the base") {
    ParamStore ps = toy_base();
    Rng rng(1);
    LoraSet set = attach(ps, kToyHosts, 8, kObjectBranch, rng);
    REQUIRE(set.hosts == kToyHosts);
    for (size_t i = 0; i < set.hosts.size(); ++i) {
        const TensorData& base = ps.get(set.hosts[i]);
        const TensorData& B = ps.get(lora_b_name(kObjectBranch, set.hosts[i]));
        const TensorData& A = ps.get(lora_a_name(kObjectBranch, set.hosts[i]));
        for (float v : B.data) CHECK(v == 0.0f);
        TensorData m = merged_weight(base, {&B}, {&A}, {1.0f});
        CHECK(m.data == base.data);
    }
}

TEST_CASE("rank clamps to min(n, m)") {
    ParamStore ps;
    Rng rng(2);
    TensorData host = TensorData::zeros({4, 64});
    for (auto& v : host.data) v = rng.normal_f();
    ps.set("toy.wide", host);
    LoraSet set = attach(ps, {"toy.wide"}, 8, kPhysicsBranch, rng);
    CHECK(set.ranks == std::vector<int64_t>{4});
    CHECK(ps.get(lora_b_name(kPhysicsBranch, "toy.wide")).shape == Shape{4, 4});
    CHECK(ps.get(lora_a_name(kPhysicsBranch, "toy.wide")).shape == Shape{4, 64});
}

TEST_CASE("both branches cover the identical host set with identical ranks") {
    ParamStore ps = toy_base();
    Rng rng(3);
    LoraSet o = attach(ps, kToyHosts, 8, kObjectBranch, rng);
    LoraSet p = attach(ps, kToyHosts, 8, kPhysicsBranch, rng);
    CHECK(o.hosts == p.hosts);
    CHECK(o.ranks == p.ranks);
    ParamStore bo = branch_params(ps, kToyHosts, kObjectBranch);
    ParamStore bp = branch_params(ps, kToyHosts, kPhysicsBranch);
    CHECK(bo.flat_size() == bp.flat_size());
}

TEST_CASE("merged weight matches the hand oracle") {
    TensorData W = TensorData::zeros({2, 2});
    TensorData B({2, 1}, {1, 0});
    TensorData A({1, 2}, {0, 1});
    TensorData m = merged_weight(W, {&B}, {&A}, {1.0f});
    CHECK(m.data == std::vector<float>{0, 1, 0, 0});

    // all weights zero -> W
    TensorData W2({2, 2}, {5, 6, 7, 8});
    TensorData m0 = merged_weight(W2, {&B}, {&A}, {0.0f});
    CHECK(m0.data == W2.data);

    // linear in w: merged(2w) - W = 2 (merged(w) - W)
    TensorData m1 = merged_weight(W2, {&B}, {&A}, {0.75f});
    TensorData m2 = merged_weight(W2, {&B}, {&A}, {1.5f});
    for (int64_t i = 0; i < 4; ++i)
        CHECK(m2.at(i) - W2.at(i) == doctest::Approx(2.0 * (m1.at(i) - W2.at(i))));

    std::vector<const TensorData*> none = {};
    CHECK(merged_weight(W2, none, {}, {}).data == W2.data);
}

TEST_CASE("no active branch reproduces base-model behavior bit-exactly") {
    ParamStore ps = toy_base();
    Rng rng(4);
    attach(ps, kToyHosts, 2, kObjectBranch, rng);
    attach(ps, kToyHosts, 2, kPhysicsBranch, rng);
    // Make the adapters non-trivial so activity would show.
    TensorData B = ps.get(lora_b_name(kObjectBranch, "toy.w1"));
    for (auto& v : B.data) v = 1.0f;
    ps.set(lora_b_name(kObjectBranch, "toy.w1"), B);

    TensorData x({1, 3}, {0.2f, -0.4f, 0.6f});
    auto forward = [&](const Binder& w) {
        Graph g;
        Var h = g.matmul(g.constant(x), w(g, "toy.w1"));
        Var out = g.matmul(g.tanh(h), w(g, "toy.w2"));
        return out.value();
    };
    auto base_out = forward(const_binder(ps));
    auto off_out = forward(lora_binder(ps, kToyHosts, BranchConfig::none(), BranchConfig::none()));
    CHECK(base_out == off_out);
    auto on_out = forward(lora_binder(ps, kToyHosts, BranchConfig::only(kObjectBranch), BranchConfig::none()));
    CHECK(base_out != on_out);
}

TEST_CASE("loss not touching a branch gives a zero gradient vector") {
    ParamStore ps = toy_base();
    Rng rng(5);
    attach(ps, kToyHosts, 2, kObjectBranch, rng);
    attach(ps, kToyHosts, 2, kPhysicsBranch, rng);
    ParamStore phys = branch_params(ps, kToyHosts, kPhysicsBranch);
    TensorData x({1, 3}, {1.0f, 2.0f, 3.0f});

    // Only the object branch is active, so the physics branch never enters
    // the graph and its gradient vector comes back as zeros.
    Graph g;
    Binder w = lora_binder(ps, kToyHosts, BranchConfig::only(kObjectBranch), BranchConfig::both());
    Var h = g.matmul(g.constant(x), w(g, "toy.w1"));
    Var loss = g.sum_all(g.mul(h, h));
    auto gp = branch_grads(g, loss, phys);
    REQUIRE(gp.size() == static_cast<size_t>(phys.flat_size()));
    for (float v : gp) CHECK(v == 0.0f);
}

TEST_CASE("branch gradients match a central-difference oracle") {
    ParamStore ps = toy_base();
    Rng rng(6);
    attach(ps, kToyHosts, 2, kObjectBranch, rng);
    attach(ps, kToyHosts, 2, kPhysicsBranch, rng);
    // Non-zero B so gradients w.r.t. A are informative too.
    for (const char* branch : {kObjectBranch, kPhysicsBranch})
        for (const auto& host : kToyHosts) {
            TensorData B = ps.get(lora_b_name(branch, host));
            Rng br(Rng::mix(7, std::hash<std::string>{}(lora_b_name(branch, host))));
            for (auto& v : B.data) v = 0.1f * br.normal_f();
            ps.set(lora_b_name(branch, host), B);
        }

    TensorData x({2, 3}, {0.5f, -0.25f, 0.75f, 0.1f, 0.9f, -0.6f});
    TensorData y({2, 2}, {0.3f, -0.2f, 0.8f, 0.05f});

    auto loss_with = [&](const ParamStore& store) {
        // f64 oracle of the same forward: out = tanh(x (w1 + B1 A1)) (w2 + B2 A2)
        auto merged64 = [&](const std::string& host) {
            const TensorData& W = store.get(host);
            std::vector<std::vector<double>> acc(static_cast<size_t>(W.shape[0]),
                                                 std::vector<double>(static_cast<size_t>(W.shape[1])));
            for (int64_t i = 0; i < W.shape[0]; ++i)
                for (int64_t j = 0; j < W.shape[1]; ++j)
                    acc[static_cast<size_t>(i)][static_cast<size_t>(j)] = W.at(i * W.shape[1] + j);
            for (const char* branch : {kObjectBranch, kPhysicsBranch}) {
                const TensorData& B = store.get(lora_b_name(branch, host));
                const TensorData& A = store.get(lora_a_name(branch, host));
                int64_t n = B.shape[0], r = B.shape[1], m = A.shape[1];
                for (int64_t i = 0; i < n; ++i)
                    for (int64_t j = 0; j < m; ++j) {
                        double s = 0;
                        for (int64_t k = 0; k < r; ++k)
                            s += static_cast<double>(B.at(i * r + k)) * A.at(k * m + j);
                        acc[static_cast<size_t>(i)][static_cast<size_t>(j)] += s;
                    }
            }
            return acc;
        };
        auto w1 = merged64("toy.w1"), w2 = merged64("toy.w2");
        double loss = 0;
        for (int64_t b = 0; b < 2; ++b) {
            std::vector<double> h(4, 0.0);
            for (int64_t j = 0; j < 4; ++j) {
                for (int64_t k = 0; k < 3; ++k)
                    h[static_cast<size_t>(j)] += static_cast<double>(x.at(b * 3 + k)) *
                                                  w1[static_cast<size_t>(k)][static_cast<size_t>(j)];
                h[static_cast<size_t>(j)] = std::tanh(h[static_cast<size_t>(j)]);
            }
            for (int64_t j = 0; j < 2; ++j) {
                double o = 0;
                for (int64_t k = 0; k < 4; ++k)
                    o += h[static_cast<size_t>(k)] * w2[static_cast<size_t>(k)][static_cast<size_t>(j)];
                double d = o - y.at(b * 2 + j);
                loss += d * d;
            }
        }
        return loss;
    };

    for (const char* branch : {kObjectBranch, kPhysicsBranch}) {
        ParamStore bp = branch_params(ps, kToyHosts, branch);

        Graph g;
        Binder w = lora_binder(ps, kToyHosts, BranchConfig::both(), BranchConfig::both());
        Var h = g.tanh(g.matmul(g.constant(x), w(g, "toy.w1")));
        Var out = g.matmul(h, w(g, "toy.w2"));
        Var diff = g.sub(out, g.constant(y));
        Var loss = g.sum_all(g.mul(diff, diff));
        auto got = branch_grads(g, loss, bp);

        // FD over each branch coordinate (f64 forward).
        std::vector<double> want(got.size());
        size_t idx = 0;
        for (const auto& name : bp.names()) {
            TensorData t = ps.get(name);
            for (size_t i = 0; i < t.data.size(); ++i) {
                float orig = t.data[i];
                ParamStore plus = ps, minus = ps;
                TensorData tp = t, tm = t;
                tp.data[i] = orig + 1e-3f;
                tm.data[i] = orig - 1e-3f;
                plus.set(name, tp);
                minus.set(name, tm);
                want[idx++] = (loss_with(plus) - loss_with(minus)) /
                              (static_cast<double>(tp.data[i]) - tm.data[i]);
            }
        }
        CHECK(max_rel_err(got, want) < 1e-3);
    }
}

TEST_CASE("denoiser hosts carry adapters without disturbing frozen weights") {
    DenoiserConfig cfg;
    cfg.height = 8;
    cfg.width = 8;
    cfg.d_model = 16;
    cfg.n_blocks = 1;
    cfg.mlp_hidden = 32;
    cfg.d_txt = 8;
    ParamStore ps;
    Rng rng(30);
    init_denoiser_params(ps, cfg, rng);
    auto hosts = lora_host_names(cfg);
    auto before = flatten_values(ps);
    LoraSet o = attach(ps, hosts, 8, kObjectBranch, rng);
    LoraSet p = attach(ps, hosts, 8, kPhysicsBranch, rng);
    CHECK(o.hosts == hosts);
    // base weights untouched by attach
    ParamStore base_only;
    for (const auto& n : denoiser_param_names(cfg)) base_only.set(n, ps.get(n));
    CHECK(flatten_values(base_only) == before);
    CHECK(std::find(hosts.begin(), hosts.end(), "den.head.w") != hosts.end());
}

TEST_CASE("unknown branch and missing host are rejected") {
    ParamStore ps = toy_base();
    Rng rng(8);
    CHECK_THROWS_AS(attach(ps, kToyHosts, 2, "texture", rng), Error);
    CHECK_THROWS_AS(attach(ps, {"toy.missing"}, 2, kObjectBranch, rng), Error);
    CHECK_THROWS_AS(attach(ps, kToyHosts, 0, kObjectBranch, rng), Error);
}
