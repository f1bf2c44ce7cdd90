#pragma once

#include <functional>

#include "crfnoise/stats.hpp"
#include "crfnoise/types.hpp"

namespace crfnoise {

// Brute-force ground truth for small models. Everything here enumerates all
// label/hidden configurations (one-hot restricted in multiclass mode) and is
// intended for validating the sampled/analytic paths, not for production use.
namespace oracle {

struct EnumerationLimit {
    int max_total_units = 20;
};

// Invokes fn for every (y, yhat, h) configuration in lexicographic order
// over the (y, yhat, h) bit blocks.
void for_each_config(const Dims& dims, Mode mode,
                     const std::function<void(const LabelVector&, const LabelVector&,
                                              const LabelVector&)>& fn);

// Same with y held fixed.
void for_each_clean_hidden(const Dims& dims, Mode mode,
                           const std::function<void(const LabelVector&, const LabelVector&)>& fn);

void check_limit(const Dims& dims, const EnumerationLimit& limit = {});

// log Z via running-max log-sum-exp.
double log_partition(const EnergyParams& params, const BiasPair& bias,
                     const EnumerationLimit& limit = {});

// Z by direct summation of exp(-E); the second accumulation route used to
// validate log_partition.
double partition_direct(const EnergyParams& params, const BiasPair& bias,
                        const EnumerationLimit& limit = {});

// Exact moments under the full joint p(y, yhat, h | x).
SuffStats exact_marginals(const EnergyParams& params, const BiasPair& bias,
                          const EnumerationLimit& limit = {});

// Exact per-unit marginals of p(yhat, h | y, x) by enumerating (yhat, h).
FactorialPosterior exact_conditional(const EnergyParams& params, const BiasPair& bias,
                                     const LabelVector& y, const EnumerationLimit& limit = {});

// Exact moments of h under p(h | y, yhat) with both labels fixed.
Vec exact_hidden_conditional(const EnergyParams& params, const LabelVector& y,
                             const EnumerationLimit& limit = {});

double log_marginal_noisy(const EnergyParams& params, const BiasPair& bias,
                          const LabelVector& y, const EnumerationLimit& limit = {});

double log_marginal_clean(const EnergyParams& params, const BiasPair& bias,
                          const LabelVector& y, const LabelVector& yhat,
                          const EnumerationLimit& limit = {});

// Auxiliary-regularized bound on log p(y|x) for a given factorial q and a
// given factorial aux conditional:
//   log p(y|x) - KL[q || p(yhat,h|y,x)] - alpha KL[q || p_aux(yhat,h|y)]
// KL terms are evaluated by enumeration over (yhat, h), independently of the
// closed-form factorial KL used elsewhere.
double exact_bound(const EnergyParams& params, const BiasPair& bias, const LabelVector& y,
                   const FactorialPosterior& q, const FactorialPosterior& aux_cond, double alpha,
                   const EnumerationLimit& limit = {});

// Clean-set counterpart: bound on log p(y, yhat|x) with q over h only.
double exact_bound_clean(const EnergyParams& params, const BiasPair& bias, const LabelVector& y,
                         const LabelVector& yhat, const Vec& q_h, const Vec& aux_h, double alpha,
                         const EnumerationLimit& limit = {});

// Probability of a single (yhat, h) configuration under a factorial posterior.
double factorial_prob(const FactorialPosterior& q, const LabelVector& yhat,
                      const LabelVector& h);

}  // namespace oracle
}  // namespace crfnoise
