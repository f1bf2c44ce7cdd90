#include "crfnoise/feature_net.hpp"

#include <cmath>

#include "crfnoise/rng.hpp"

namespace crfnoise {

FeatureNet::FeatureNet(Kind kind, int input_dim, int hidden_dim, int C, int N,
                       bool emits_noisy_bias)
    : kind_(kind),
      input_dim_(input_dim),
      hidden_dim_(kind == Kind::mlp1 ? hidden_dim : 0),
      C_(C),
      N_(N),
      emits_noisy_bias_(emits_noisy_bias) {
    if (input_dim <= 0 || C <= 0 || N <= 0)
        throw std::invalid_argument("FeatureNet: dims must be positive");
    if (kind == Kind::mlp1 && hidden_dim <= 0)
        throw std::invalid_argument("FeatureNet: mlp1 needs hidden_dim > 0");
    if (kind_ == Kind::mlp1) {
        W1_ = Mat::Zero(hidden_dim_, input_dim_);
        w0_ = Vec::Zero(hidden_dim_);
    }
    A_ = Mat::Zero(C_, head_input_dim());
    a0_ = Vec::Zero(C_);
    if (emits_noisy_bias_) B_ = Mat::Zero(N_, head_input_dim());
    b0_ = Vec::Zero(N_);
}

void FeatureNet::init(uint64_t seed) {
    Rng rng = Rng::from_key(seed, 0x6e6574ULL);
    auto fill = [&rng](Mat& m, int fan_in) {
        double sigma = 1.0 / std::sqrt(static_cast<double>(fan_in));
        for (int i = 0; i < m.rows(); ++i)
            for (int j = 0; j < m.cols(); ++j) m(i, j) = rng.normal(0.0, sigma);
    };
    if (kind_ == Kind::mlp1) fill(W1_, input_dim_);
    fill(A_, head_input_dim());
    if (emits_noisy_bias_) fill(B_, head_input_dim());
}

BiasPair FeatureNet::forward(const Vec& x) const {
    if (x.size() != input_dim_) throw DimError("FeatureNet::forward: input dim");
    if (!x.allFinite()) throw std::invalid_argument("FeatureNet::forward: non-finite input");
    Vec z = kind_ == Kind::linear ? x : Vec((W1_ * x + w0_).array().tanh());
    BiasPair out;
    out.a = A_ * z + a0_;
    out.b = emits_noisy_bias_ ? Vec(B_ * z + b0_) : b0_;
    return out;
}

Gradient FeatureNet::backward(const Vec& x, const Vec& grad_a, const Vec& grad_b) const {
    if (x.size() != input_dim_) throw DimError("FeatureNet::backward: input dim");
    if (grad_a.size() != C_ || grad_b.size() != N_)
        throw DimError("FeatureNet::backward: upstream gradient dims");

    Vec z = kind_ == Kind::linear ? x : Vec((W1_ * x + w0_).array().tanh());

    Gradient g;
    g.values = Vec::Zero(param_count());
    int off = 0;
    auto put_mat = [&](const Mat& m) {
        Eigen::Map<Vec>(g.values.data() + off, m.size()) =
            Eigen::Map<const Vec>(m.data(), m.size());
        off += static_cast<int>(m.size());
    };
    auto put_vec = [&](const Vec& v) {
        g.values.segment(off, v.size()) = v;
        off += static_cast<int>(v.size());
    };

    if (kind_ == Kind::mlp1) {
        Vec u = A_.transpose() * grad_a;
        if (emits_noisy_bias_) u += B_.transpose() * grad_b;
        Vec du = u.array() * (1.0 - z.array().square());
        put_mat(du * x.transpose());
        put_vec(du);
    }
    put_mat(grad_a * z.transpose());
    put_vec(grad_a);
    if (emits_noisy_bias_) put_mat(grad_b * z.transpose());
    put_vec(grad_b);
    return g;
}

int FeatureNet::param_count() const {
    int n = static_cast<int>(A_.size() + a0_.size() + b0_.size());
    if (emits_noisy_bias_) n += static_cast<int>(B_.size());
    if (kind_ == Kind::mlp1) n += static_cast<int>(W1_.size() + w0_.size());
    return n;
}

Vec FeatureNet::get_params() const {
    Vec flat(param_count());
    int off = 0;
    auto take_mat = [&](const Mat& m) {
        Eigen::Map<Vec>(flat.data() + off, m.size()) = Eigen::Map<const Vec>(m.data(), m.size());
        off += static_cast<int>(m.size());
    };
    auto take_vec = [&](const Vec& v) {
        flat.segment(off, v.size()) = v;
        off += static_cast<int>(v.size());
    };
    if (kind_ == Kind::mlp1) {
        take_mat(W1_);
        take_vec(w0_);
    }
    take_mat(A_);
    take_vec(a0_);
    if (emits_noisy_bias_) take_mat(B_);
    take_vec(b0_);
    return flat;
}

void FeatureNet::set_params(const Vec& flat) {
    if (flat.size() != param_count()) throw DimError("FeatureNet::set_params: length");
    int off = 0;
    auto fill_mat = [&](Mat& m) {
        Eigen::Map<Vec>(m.data(), m.size()) = flat.segment(off, m.size());
        off += static_cast<int>(m.size());
    };
    auto fill_vec = [&](Vec& v) {
        v = flat.segment(off, v.size());
        off += static_cast<int>(v.size());
    };
    if (kind_ == Kind::mlp1) {
        fill_mat(W1_);
        fill_vec(w0_);
    }
    fill_mat(A_);
    fill_vec(a0_);
    if (emits_noisy_bias_) fill_mat(B_);
    fill_vec(b0_);
}

}  // namespace crfnoise
