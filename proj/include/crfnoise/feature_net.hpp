#pragma once

#include <cstdint>

#include "crfnoise/types.hpp"

namespace crfnoise {

// Flat parameter gradient aligned to a net's parameter layout.
struct Gradient {
    Vec values;
    double norm() const { return values.norm(); }
};

// Differentiable bias producer: maps a feature vector x to the bias pair
// (a(x), b(x)): a linear map or a one-hidden-layer tanh MLP over
// precomputed feature vectors. When
// emits_noisy_bias is false, b is an x-independent learned vector.
class FeatureNet {
  public:
    enum class Kind { linear, mlp1 };

    FeatureNet() = default;
    FeatureNet(Kind kind, int input_dim, int hidden_dim, int C, int N, bool emits_noisy_bias);

    void init(uint64_t seed);

    BiasPair forward(const Vec& x) const;

    // Gradient of grad_a' a(x) + grad_b' b(x) with respect to all parameters.
    Gradient backward(const Vec& x, const Vec& grad_a, const Vec& grad_b) const;

    int param_count() const;
    Vec get_params() const;
    void set_params(const Vec& flat);

    Kind kind() const { return kind_; }
    int input_dim() const { return input_dim_; }
    int hidden_dim() const { return hidden_dim_; }
    int n_clean() const { return C_; }
    int n_noisy() const { return N_; }
    bool emits_noisy_bias() const { return emits_noisy_bias_; }

  private:
    Kind kind_ = Kind::linear;
    int input_dim_ = 0;
    int hidden_dim_ = 0;
    int C_ = 0;
    int N_ = 0;
    bool emits_noisy_bias_ = true;

    // linear: a = A x + a0, b = B x + b0.
    // mlp1:   z = tanh(W1 x + w0), a = A z + a0, b = B z + b0.
    Mat W1_;
    Vec w0_;
    Mat A_;
    Vec a0_;
    Mat B_;
    Vec b0_;

    int head_input_dim() const { return kind_ == Kind::linear ? input_dim_ : hidden_dim_; }
};

}  // namespace crfnoise
