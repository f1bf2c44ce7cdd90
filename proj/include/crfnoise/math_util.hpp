#pragma once

#include <cmath>

#include "crfnoise/types.hpp"

namespace crfnoise {

// Branching form keeps exp() argument nonpositive; exact at extreme logits.
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    double e = std::exp(x);
    return e / (1.0 + e);
}

inline Vec sigmoid(const Vec& x) {
    Vec out(x.size());
    for (int i = 0; i < x.size(); ++i) out[i] = sigmoid(x[i]);
    return out;
}

// log(1 + exp(x)) without overflow.
inline double softplus(double x) {
    if (x > 0.0) return x + std::log1p(std::exp(-x));
    return std::log1p(std::exp(x));
}

inline Vec softmax(const Vec& logits) {
    double m = logits.maxCoeff();
    Vec e = (logits.array() - m).exp();
    return e / e.sum();
}

inline double log_sum_exp(const Vec& v) {
    double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

// KL between Bernoulli(p) and Bernoulli(q), guarded at the endpoints.
inline double bernoulli_kl(double p, double q) {
    const double eps = 1e-12;
    double qc = std::min(std::max(q, eps), 1.0 - eps);
    double term = 0.0;
    if (p > 0.0) term += p * (std::log(p) - std::log(qc));
    if (p < 1.0) term += (1.0 - p) * (std::log(1.0 - p) - std::log(1.0 - qc));
    return term;
}

inline double categorical_kl(const Vec& p, const Vec& q) {
    const double eps = 1e-12;
    double kl = 0.0;
    for (int i = 0; i < p.size(); ++i) {
        if (p[i] > 0.0) kl += p[i] * (std::log(p[i]) - std::log(std::max(q[i], eps)));
    }
    return kl;
}

inline double bernoulli_entropy(double p) {
    double h = 0.0;
    if (p > 0.0) h -= p * std::log(p);
    if (p < 1.0) h -= (1.0 - p) * std::log(1.0 - p);
    return h;
}

inline double categorical_entropy(const Vec& p) {
    double h = 0.0;
    for (int i = 0; i < p.size(); ++i)
        if (p[i] > 0.0) h -= p[i] * std::log(p[i]);
    return h;
}

}  // namespace crfnoise
