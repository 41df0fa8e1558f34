#pragma once

// Independent double-precision reference math used as the oracle side of
// gradient checks. Deliberately written as plain loops with no shared code
// with the library under test.

#include <cassert>
#include <cmath>
#include <cstdint>
#include <vector>

namespace ref {

struct Mat {
    int64_t r = 0, c = 0;
    std::vector<double> v;

    Mat() = default;
    Mat(int64_t r_, int64_t c_) : r(r_), c(c_), v(static_cast<size_t>(r_ * c_), 0.0) {}
    Mat(int64_t r_, int64_t c_, std::vector<double> d) : r(r_), c(c_), v(std::move(d)) {
        assert(static_cast<int64_t>(v.size()) == r * c);
    }
    double& at(int64_t i, int64_t j) { return v[static_cast<size_t>(i * c + j)]; }
    double at(int64_t i, int64_t j) const { return v[static_cast<size_t>(i * c + j)]; }
};

inline Mat matmul(const Mat& a, const Mat& b) {
    assert(a.c == b.r);
    Mat out(a.r, b.c);
    for (int64_t i = 0; i < a.r; ++i)
        for (int64_t k = 0; k < a.c; ++k) {
            double aik = a.at(i, k);
            for (int64_t j = 0; j < b.c; ++j) out.at(i, j) += aik * b.at(k, j);
        }
    return out;
}

inline Mat transpose(const Mat& a) {
    Mat out(a.c, a.r);
    for (int64_t i = 0; i < a.r; ++i)
        for (int64_t j = 0; j < a.c; ++j) out.at(j, i) = a.at(i, j);
    return out;
}

inline Mat add(const Mat& a, const Mat& b) {
    assert(a.r == b.r && a.c == b.c);
    Mat out = a;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
    return out;
}

inline Mat sub(const Mat& a, const Mat& b) {
    assert(a.r == b.r && a.c == b.c);
    Mat out = a;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.v[i];
    return out;
}

inline Mat mul(const Mat& a, const Mat& b) {
    assert(a.r == b.r && a.c == b.c);
    Mat out = a;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] *= b.v[i];
    return out;
}

inline Mat divide(const Mat& a, const Mat& b) {
    Mat out = a;
    for (size_t i = 0; i < out.v.size(); ++i) out.v[i] /= b.v[i];
    return out;
}

inline Mat scale(const Mat& a, double s) {
    Mat out = a;
    for (double& x : out.v) x *= s;
    return out;
}

inline Mat add_scalar(const Mat& a, double s) {
    Mat out = a;
    for (double& x : out.v) x += s;
    return out;
}

inline Mat tanh(const Mat& a) {
    Mat out = a;
    for (double& x : out.v) x = std::tanh(x);
    return out;
}

inline Mat exp(const Mat& a) {
    Mat out = a;
    for (double& x : out.v) x = std::exp(x);
    return out;
}

inline Mat log(const Mat& a) {
    Mat out = a;
    for (double& x : out.v) x = std::log(x);
    return out;
}

inline Mat sqrt(const Mat& a) {
    Mat out = a;
    for (double& x : out.v) x = std::sqrt(x);
    return out;
}

inline Mat silu(const Mat& a) {
    Mat out = a;
    for (double& x : out.v) x = x * (0.5 * std::tanh(0.5 * x) + 0.5);
    return out;
}

inline Mat softmax_rows(const Mat& a) {
    Mat out = a;
    for (int64_t i = 0; i < a.r; ++i) {
        double m = a.at(i, 0);
        for (int64_t j = 1; j < a.c; ++j) m = std::max(m, a.at(i, j));
        double s = 0;
        for (int64_t j = 0; j < a.c; ++j) {
            out.at(i, j) = std::exp(a.at(i, j) - m);
            s += out.at(i, j);
        }
        for (int64_t j = 0; j < a.c; ++j) out.at(i, j) /= s;
    }
    return out;
}

inline Mat layer_norm_rows(const Mat& a, double eps = 1e-5) {
    Mat out = a;
    for (int64_t i = 0; i < a.r; ++i) {
        double mu = 0;
        for (int64_t j = 0; j < a.c; ++j) mu += a.at(i, j);
        mu /= static_cast<double>(a.c);
        double var = 0;
        for (int64_t j = 0; j < a.c; ++j) var += (a.at(i, j) - mu) * (a.at(i, j) - mu);
        var /= static_cast<double>(a.c);
        double d = std::sqrt(var + eps);
        for (int64_t j = 0; j < a.c; ++j) out.at(i, j) = (a.at(i, j) - mu) / d;
    }
    return out;
}

inline Mat rows(const Mat& a, int64_t start, int64_t n) {
    Mat out(n, a.c);
    for (int64_t i = 0; i < n; ++i)
        for (int64_t j = 0; j < a.c; ++j) out.at(i, j) = a.at(start + i, j);
    return out;
}

inline Mat concat0(const Mat& a, const Mat& b) {
    assert(a.c == b.c);
    Mat out(a.r + b.r, a.c);
    for (int64_t i = 0; i < a.r; ++i)
        for (int64_t j = 0; j < a.c; ++j) out.at(i, j) = a.at(i, j);
    for (int64_t i = 0; i < b.r; ++i)
        for (int64_t j = 0; j < a.c; ++j) out.at(a.r + i, j) = b.at(i, j);
    return out;
}

inline Mat gather_rows(const Mat& a, const std::vector<int64_t>& ids) {
    Mat out(static_cast<int64_t>(ids.size()), a.c);
    for (size_t i = 0; i < ids.size(); ++i)
        for (int64_t j = 0; j < a.c; ++j) out.at(static_cast<int64_t>(i), j) = a.at(ids[i], j);
    return out;
}

inline Mat patchify(const Mat& img, int64_t p) {
    int64_t gh = img.r / p, gw = img.c / p;
    Mat out(gh * gw, p * p);
    for (int64_t ty = 0; ty < gh; ++ty)
        for (int64_t tx = 0; tx < gw; ++tx)
            for (int64_t py = 0; py < p; ++py)
                for (int64_t px = 0; px < p; ++px)
                    out.at(ty * gw + tx, py * p + px) = img.at(ty * p + py, tx * p + px);
    return out;
}

inline Mat unpatchify(const Mat& tok, int64_t h, int64_t w, int64_t p) {
    int64_t gw = w / p;
    Mat out(h, w);
    for (int64_t t = 0; t < tok.r; ++t) {
        int64_t ty = t / gw, tx = t % gw;
        for (int64_t py = 0; py < p; ++py)
            for (int64_t px = 0; px < p; ++px)
                out.at(ty * p + py, tx * p + px) = tok.at(t, py * p + px);
    }
    return out;
}

inline double sum(const Mat& a) {
    double s = 0;
    for (double x : a.v) s += x;
    return s;
}

inline double mean(const Mat& a) { return sum(a) / static_cast<double>(a.v.size()); }

inline Mat reshape(const Mat& a, int64_t r, int64_t c) {
    assert(r * c == static_cast<int64_t>(a.v.size()));
    Mat out(r, c);
    out.v = a.v;
    return out;
}

inline Mat from_f32(const std::vector<float>& x, int64_t r, int64_t c) {
    Mat out(r, c);
    for (size_t i = 0; i < x.size(); ++i) out.v[i] = static_cast<double>(x[i]);
    return out;
}

} // namespace ref
