#pragma once

#include <Eigen/Dense>
#include <stdexcept>
#include <string>

namespace crfnoise {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Mode { multilabel, multiclass };

inline std::string mode_name(Mode m) {
    return m == Mode::multilabel ? "multilabel" : "multiclass";
}
inline Mode mode_from_name(const std::string& s) {
    if (s == "multilabel") return Mode::multilabel;
    if (s == "multiclass") return Mode::multiclass;
    throw std::invalid_argument("unknown mode: " + s);
}

struct DimError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Binary label vector; entries are stored as 0.0/1.0 doubles so they can be
// used directly in matrix products. Multiclass vectors are one-hot.
struct LabelVector {
    Vec bits;
    Mode mode = Mode::multilabel;

    LabelVector() = default;
    LabelVector(Vec b, Mode m) : bits(std::move(b)), mode(m) { validate(); }

    static LabelVector zeros(int len, Mode m) {
        return LabelVector(Vec::Zero(len), m);
    }
    static LabelVector one_hot(int len, int idx) {
        Vec v = Vec::Zero(len);
        v[idx] = 1.0;
        return LabelVector(std::move(v), Mode::multiclass);
    }

    int length() const { return static_cast<int>(bits.size()); }

    int argmax() const {
        int idx = 0;
        bits.maxCoeff(&idx);
        return idx;
    }

    void validate() const {
        int ones = 0;
        for (int i = 0; i < bits.size(); ++i) {
            if (bits[i] != 0.0 && bits[i] != 1.0)
                throw std::invalid_argument("LabelVector entry not in {0,1}");
            ones += bits[i] == 1.0;
        }
        if (mode == Mode::multiclass && ones != 1)
            throw std::invalid_argument("multiclass LabelVector must be one-hot");
    }
};

// Input-dependent bias terms: a over clean units (length C), b over noisy
// units (length N).
struct BiasPair {
    Vec a;
    Vec b;
};

struct Dims {
    int N = 0;  // noisy labels
    int C = 0;  // clean labels
    int H = 0;  // hidden units
    int total() const { return N + C + H; }
    bool operator==(const Dims&) const = default;
};

// CRF parameters excluding the bias producer: free hidden bias c, pairwise
// clean-noisy matrix W (C x N) and hidden-noisy matrix Wp (H x N).
struct EnergyParams {
    Vec c;
    Mat W;
    Mat Wp;
    Dims dims;
    Mode mode = Mode::multilabel;

    static EnergyParams zeros(Dims d, Mode m = Mode::multilabel) {
        EnergyParams p;
        p.c = Vec::Zero(d.H);
        p.W = Mat::Zero(d.C, d.N);
        p.Wp = Mat::Zero(d.H, d.N);
        p.dims = d;
        p.mode = m;
        return p;
    }

    void check() const {
        if (c.size() != dims.H || W.rows() != dims.C || W.cols() != dims.N ||
            Wp.rows() != dims.H || Wp.cols() != dims.N)
            throw DimError("EnergyParams dims inconsistent");
        if (!c.allFinite() || !W.allFinite() || !Wp.allFinite())
            throw std::invalid_argument("EnergyParams has non-finite entries");
    }
};

// Per-unit Bernoulli (or categorical, in multiclass mode) probabilities for
// the factorial posterior over (clean, hidden) units.
struct FactorialPosterior {
    Vec p_clean;
    Vec p_hidden;
    Mode mode = Mode::multilabel;

    void validate() const {
        auto in_range = [](const Vec& v) {
            return (v.array() >= 0.0).all() && (v.array() <= 1.0).all();
        };
        if (!in_range(p_clean) || !in_range(p_hidden))
            throw std::invalid_argument("FactorialPosterior probability outside [0,1]");
        if (mode == Mode::multiclass && std::abs(p_clean.sum() - 1.0) > 1e-9)
            throw std::invalid_argument("multiclass posterior must sum to 1");
    }
};

inline void check_bias(const BiasPair& bias, const Dims& d) {
    if (bias.a.size() != d.C || bias.b.size() != d.N)
        throw DimError("BiasPair dims inconsistent");
}

inline void check_state(const Dims& d, const LabelVector& y, const LabelVector& yhat,
                        const LabelVector& h) {
    if (y.length() != d.N || yhat.length() != d.C || h.length() != d.H)
        throw DimError("state dims inconsistent");
}

}  // namespace crfnoise
