#pragma once

#include <optional>
#include <string>

#include "crfnoise/types.hpp"

namespace crfnoise {

// Fixed generative model over (y, yhat, h): same quadratic energy as the CRF
// but with x-independent biases.
struct AuxRbm {
    Vec a;   // C
    Vec b;   // N
    Vec c;   // H_aux
    Mat W;   // C x N
    Mat Wp;  // H_aux x N
    Mode mode = Mode::multilabel;

    int n_noisy() const { return static_cast<int>(b.size()); }
    int n_clean() const { return static_cast<int>(a.size()); }
    int n_hidden() const { return static_cast<int>(c.size()); }

    static AuxRbm zeros(int N, int C, int H_aux, Mode mode = Mode::multilabel);

    // View as CRF parameters + constant bias so the sampler and oracle apply.
    EnergyParams as_energy_params() const;
    BiasPair as_bias() const;
    void check() const;
};

// Transition-conditional aux model for multiclass: a row-stochastic noise
// matrix T (clean -> noisy) inverted through Bayes rule with a clean-class
// prior into p_aux(yhat | y).
struct AuxTransition {
    Mat T;          // C x C, rows sum to 1
    Vec prior;      // clean-class prior, defaults to uniform
    Mat log_post;   // C x C, log p_aux(yhat=i | y=k) in column k

    void check() const;
};

struct AuxModel {
    std::optional<AuxRbm> rbm;
    std::optional<AuxTransition> transition;

    bool is_rbm() const { return rbm.has_value(); }
    Mode mode() const;

    // Logits of the factorial aux conditional given y. In transition mode the
    // clean "logits" are the log posterior scores of the noisy class of y.
    Vec aux_clean_logits(const LabelVector& y) const;
    Vec aux_hidden_logits(const LabelVector& y) const;
    int aux_hidden_count() const;
};

// Factorial p_aux(yhat, h | y) of an aux RBM.
FactorialPosterior aux_cond(const AuxRbm& aux, const LabelVector& y);

// Posterior over clean classes given noisy class, in transition mode.
Vec aux_transition_posterior(const AuxTransition& aux, int noisy_class);

struct AuxRbmTrainConfig {
    int hidden_units = 200;
    int epochs = 100;
    int chains = 25;
    int sweeps_per_update = 5;
    int minibatch_size = 100;
    double learning_rate = 0.01;
    double clip_norm = 10.0;
    double init_sigma = 0.01;
    uint64_t seed = 0;
};

// PCD training of the aux RBM on fully observed (y, yhat) pairs; h is free.
AuxRbm train_aux_rbm(const std::vector<std::pair<LabelVector, LabelVector>>& clean_set,
                     const AuxRbmTrainConfig& config, Mode mode = Mode::multilabel);

// Bayes inversion of a row-stochastic T under the given clean prior
// (uniform when empty).
AuxTransition fit_aux_transition(const Mat& T, const Vec& prior = Vec());

void save_aux_model(const AuxModel& aux, const std::string& path);
AuxModel load_aux_model(const std::string& path);

}  // namespace crfnoise
