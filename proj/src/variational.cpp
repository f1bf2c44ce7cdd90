#include "crfnoise/variational.hpp"

#include <cmath>

#include "crfnoise/crf.hpp"
#include "crfnoise/math_util.hpp"

namespace crfnoise {

void AlphaSchedule::check() const {
    if (start < end || end < 0.0)
        throw std::invalid_argument("AlphaSchedule requires start >= end >= 0");
    if (anneal_epochs <= 0) throw std::invalid_argument("AlphaSchedule: anneal_epochs > 0");
}

double AlphaSchedule::at(int epoch) const {
    check();
    if (epoch >= anneal_epochs) return end;
    if (epoch < 0) return start;
    double t = static_cast<double>(epoch) / anneal_epochs;
    if (shape == Shape::linear) return start + (end - start) * t;
    // Exponential decay hitting `end` exactly at anneal_epochs.
    double s = std::max(start, 1e-12);
    double e = std::max(end, 1e-12);
    return s * std::pow(e / s, t);
}

namespace {

Vec blend(const Vec& model_logits, const Vec& aux_logits, double alpha) {
    return (model_logits + alpha * aux_logits) / (alpha + 1.0);
}

}  // namespace

FactorialPosterior q_noisy(const EnergyParams& params, const BiasPair& bias, const AuxModel& aux,
                           const LabelVector& y, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("q_noisy: alpha must be nonnegative");
    Vec model_clean = clean_logits(params, bias, y);
    Vec aux_clean = aux.aux_clean_logits(y);
    if (aux_clean.size() != model_clean.size())
        throw DimError("q_noisy: aux clean dimension mismatch");

    FactorialPosterior q;
    q.mode = params.mode;
    Vec blended = blend(model_clean, aux_clean, alpha);
    q.p_clean = params.mode == Mode::multiclass ? softmax(blended) : sigmoid(blended);

    Vec model_hidden = hidden_logits(params, y);
    if (aux.aux_hidden_count() == params.dims.H && params.dims.H > 0) {
        q.p_hidden = sigmoid(blend(model_hidden, aux.aux_hidden_logits(y), alpha));
    } else {
        // Hidden spaces differ; fall back to the model conditional.
        q.p_hidden = sigmoid(model_hidden);
    }
    return q;
}

Vec q_clean(const EnergyParams& params, const AuxModel& aux, const LabelVector& y, double alpha) {
    if (alpha < 0.0) throw std::invalid_argument("q_clean: alpha must be nonnegative");
    Vec model_hidden = hidden_logits(params, y);
    if (aux.aux_hidden_count() == params.dims.H && params.dims.H > 0)
        return sigmoid(blend(model_hidden, aux.aux_hidden_logits(y), alpha));
    return sigmoid(model_hidden);
}

double kl_objective(const FactorialPosterior& q, const FactorialPosterior& p_model,
                    const FactorialPosterior& p_aux, double alpha) {
    q.validate();
    p_model.validate();
    p_aux.validate();
    if (q.p_clean.size() != p_model.p_clean.size() || q.p_clean.size() != p_aux.p_clean.size() ||
        q.p_hidden.size() != p_model.p_hidden.size() || q.p_hidden.size() != p_aux.p_hidden.size())
        throw DimError("kl_objective: dimension mismatch");

    double kl_m = 0.0, kl_a = 0.0;
    if (q.mode == Mode::multiclass) {
        kl_m += categorical_kl(q.p_clean, p_model.p_clean);
        kl_a += categorical_kl(q.p_clean, p_aux.p_clean);
    } else {
        for (int i = 0; i < q.p_clean.size(); ++i) {
            kl_m += bernoulli_kl(q.p_clean[i], p_model.p_clean[i]);
            kl_a += bernoulli_kl(q.p_clean[i], p_aux.p_clean[i]);
        }
    }
    for (int j = 0; j < q.p_hidden.size(); ++j) {
        kl_m += bernoulli_kl(q.p_hidden[j], p_model.p_hidden[j]);
        kl_a += bernoulli_kl(q.p_hidden[j], p_aux.p_hidden[j]);
    }
    return kl_m + alpha * kl_a;
}

}  // namespace crfnoise
