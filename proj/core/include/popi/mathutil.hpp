// Copyright (c) 2026, the popi authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <span>

namespace popi {

inline double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

/// softplus(x) = log(1 + e^x), computed without overflow.
inline double softplus(double x) {
    if (x > 0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

/// log sigma(x) = -softplus(-x).
inline double log_sigmoid(double x) { return -softplus(-x); }

/// 0 log 0 := 0 convention for entropy/KL sums.
inline double xlogy(double x, double y) { return x == 0.0 ? 0.0 : x * std::log(y); }

inline double binary_entropy(double p) { return -xlogy(p, p) - xlogy(1.0 - p, 1.0 - p); }

inline double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

inline double l2_norm(std::span<const double> v) { return std::sqrt(dot(v, v)); }

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
    double na = l2_norm(a), nb = l2_norm(b);
    if (na == 0.0 || nb == 0.0) return 0.0;
    return dot(a, b) / (na * nb);
}

}  // namespace popi
