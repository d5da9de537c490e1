#pragma once

#include "rpl/risk.hpp"

#include <cstdint>
#include <random>

namespace rpl::testing {

inline Dataset random_dataset(std::mt19937_64& gen, Index n, Index d, double noise = 0.3) {
    std::normal_distribution<double> normal(0.0, 1.0);
    Dataset data;
    data.xs.resize(n, d);
    data.ys.resize(n);
    for (Index i = 0; i < n; ++i) {
        double s = 0.0;
        for (Index c = 0; c < d; ++c) {
            data.xs(i, c) = normal(gen);
            s += std::sin(data.xs(i, c));
        }
        data.ys(i) = s + noise * normal(gen);
    }
    return data;
}

inline Vector random_vector(std::mt19937_64& gen, Index n, double scale = 1.0) {
    std::normal_distribution<double> normal(0.0, scale);
    Vector v(n);
    for (Index i = 0; i < n; ++i) v(i) = normal(gen);
    return v;
}

inline Vector random_weights(std::mt19937_64& gen, Index n) {
    std::uniform_real_distribution<double> unif(0.1, 1.0);
    Vector w(n);
    for (Index i = 0; i < n; ++i) w(i) = unif(gen);
    return w / w.sum();
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

}  // namespace rpl::testing
