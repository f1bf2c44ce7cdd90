#pragma once

#include "crfnoise/types.hpp"

namespace crfnoise {

// Quadratic energy of a (y, yhat, h) configuration:
//   -a'yhat - b'y - c'h - yhat'Wy - h'Wp y
double energy(const EnergyParams& params, const BiasPair& bias, const LabelVector& y,
              const LabelVector& yhat, const LabelVector& h);

double unnormalized_log_joint(const EnergyParams& params, const BiasPair& bias,
                              const LabelVector& y, const LabelVector& yhat,
                              const LabelVector& h);

// Logits of the factorial conditional over (yhat, h) given y. Clean logits
// depend on bias.a and W; hidden logits on c and Wp only.
Vec clean_logits(const EnergyParams& params, const BiasPair& bias, const LabelVector& y);
Vec hidden_logits(const EnergyParams& params, const LabelVector& y);

// p(yhat, h | y, x): per-unit sigmoids in multilabel mode, softmax over the
// clean units in multiclass mode.
FactorialPosterior cond_clean_hidden(const EnergyParams& params, const BiasPair& bias,
                                     const LabelVector& y);

// Logits of the noisy-side conditional given (yhat, h).
Vec noisy_logits(const EnergyParams& params, const BiasPair& bias, const LabelVector& yhat,
                 const LabelVector& h);

// p(y_j = 1 | yhat, h, x); softmax over units in multiclass mode.
Vec cond_noisy(const EnergyParams& params, const BiasPair& bias, const LabelVector& yhat,
               const LabelVector& h);

}  // namespace crfnoise
