#include "crfnoise/crf.hpp"

#include "crfnoise/math_util.hpp"

namespace crfnoise {

double energy(const EnergyParams& params, const BiasPair& bias, const LabelVector& y,
              const LabelVector& yhat, const LabelVector& h) {
    params.check();
    check_bias(bias, params.dims);
    check_state(params.dims, y, yhat, h);
    double e = 0.0;
    e -= bias.a.dot(yhat.bits);
    e -= bias.b.dot(y.bits);
    e -= params.c.dot(h.bits);
    e -= yhat.bits.dot(params.W * y.bits);
    e -= h.bits.dot(params.Wp * y.bits);
    return e;
}

double unnormalized_log_joint(const EnergyParams& params, const BiasPair& bias,
                              const LabelVector& y, const LabelVector& yhat,
                              const LabelVector& h) {
    return -energy(params, bias, y, yhat, h);
}

Vec clean_logits(const EnergyParams& params, const BiasPair& bias, const LabelVector& y) {
    if (y.length() != params.dims.N) throw DimError("clean_logits: y length");
    if (bias.a.size() != params.dims.C) throw DimError("clean_logits: bias.a length");
    return bias.a + params.W * y.bits;
}

Vec hidden_logits(const EnergyParams& params, const LabelVector& y) {
    if (y.length() != params.dims.N) throw DimError("hidden_logits: y length");
    return params.c + params.Wp * y.bits;
}

FactorialPosterior cond_clean_hidden(const EnergyParams& params, const BiasPair& bias,
                                     const LabelVector& y) {
    FactorialPosterior post;
    post.mode = params.mode;
    Vec cl = clean_logits(params, bias, y);
    post.p_clean = params.mode == Mode::multiclass ? softmax(cl) : sigmoid(cl);
    post.p_hidden = sigmoid(hidden_logits(params, y));
    return post;
}

Vec noisy_logits(const EnergyParams& params, const BiasPair& bias, const LabelVector& yhat,
                 const LabelVector& h) {
    if (yhat.length() != params.dims.C || h.length() != params.dims.H)
        throw DimError("noisy_logits: state dims");
    if (bias.b.size() != params.dims.N) throw DimError("noisy_logits: bias.b length");
    return bias.b + params.W.transpose() * yhat.bits + params.Wp.transpose() * h.bits;
}

Vec cond_noisy(const EnergyParams& params, const BiasPair& bias, const LabelVector& yhat,
               const LabelVector& h) {
    Vec logits = noisy_logits(params, bias, yhat, h);
    return params.mode == Mode::multiclass ? softmax(logits) : sigmoid(logits);
}

}  // namespace crfnoise
