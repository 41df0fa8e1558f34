#pragma once

// Central finite differences used as the independent check against
// reverse-mode results. Accumulation is double throughout.

#include <cmath>
#include <functional>
#include <vector>

inline std::vector<double> fd_gradient(const std::function<double(const std::vector<float>&)>& f,
                                       std::vector<float> x, double h = 1e-3) {
    std::vector<double> g(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        float orig = x[i];
        x[i] = static_cast<float>(orig + h);
        double fp = f(x);
        x[i] = static_cast<float>(orig - h);
        double fm = f(x);
        x[i] = orig;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

inline double rel_err(double got, double want) {
    double denom = std::max(std::abs(want), 1e-8);
    return std::abs(got - want) / denom;
}

inline double max_rel_err(const std::vector<float>& got, const std::vector<double>& want,
                          double floor = 1e-4) {
    double worst = 0.0;
    for (size_t i = 0; i < got.size(); ++i) {
        double denom = std::max(std::abs(want[i]), floor);
        worst = std::max(worst, std::abs(static_cast<double>(got[i]) - want[i]) / denom);
    }
    return worst;
}
