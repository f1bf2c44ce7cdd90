#pragma once

#include "crfnoise/aux_model.hpp"
#include "crfnoise/types.hpp"

namespace crfnoise {

// Annealed weight of the auxiliary KL regularizer.
struct AlphaSchedule {
    double start = 0.0;
    double end = 0.0;
    int anneal_epochs = 1;
    enum class Shape { linear, exponential } shape = Shape::linear;

    void check() const;
    // alpha at epoch t (0-based); clamped to `end` for t >= anneal_epochs.
    double at(int epoch) const;
};

// Regularized variational distribution for a noisy instance: per-unit logits
// are the alpha-weighted average of model and aux logits,
//   logit = (model + alpha * aux) / (alpha + 1),
// applied to the clean units always and to the hidden units only when the
// model and aux hidden layers have the same size.
FactorialPosterior q_noisy(const EnergyParams& params, const BiasPair& bias, const AuxModel& aux,
                           const LabelVector& y, double alpha);

// Clean-instance counterpart: blended posterior over the hidden units only.
Vec q_clean(const EnergyParams& params, const AuxModel& aux, const LabelVector& y, double alpha);

// KL[q || p_model] + alpha * KL[q || p_aux], factorial closed form.
double kl_objective(const FactorialPosterior& q, const FactorialPosterior& p_model,
                    const FactorialPosterior& p_aux, double alpha);

}  // namespace crfnoise
