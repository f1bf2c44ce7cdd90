#pragma once

#include <string>
#include <vector>

#include "crfnoise/aux_model.hpp"
#include "crfnoise/dataset.hpp"
#include "crfnoise/feature_net.hpp"
#include "crfnoise/gibbs.hpp"
#include "crfnoise/metrics.hpp"
#include "crfnoise/stats.hpp"
#include "crfnoise/variational.hpp"

namespace crfnoise {

enum class Variant {
    no_pairwise,
    crf_no_hidden,
    crf_hidden,
    crf_no_xy,
    clean_only_ce,
    noisy_only_ce,
};

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& s);

struct TrainConfig {
    int epochs = 20;
    int minibatch_size = 32;
    double clean_fraction = -1.0;  // < 0: proportional to |D_C| / (|D_C| + |D_N|)
    double learning_rate = 0.001;
    bool use_adam = true;
    double adam_eps = 1.0;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double clip_norm = 10.0;
    AlphaSchedule alpha;
    Variant variant = Variant::crf_hidden;
    GibbsConfig gibbs;
    int chains_per_instance = 50;
    int hidden_units = 0;  // H of the CRF (not the aux model)
    FeatureNet::Kind net_kind = FeatureNet::Kind::linear;
    int net_hidden = 32;
    uint64_t seed = 0;
    // Replace PCD with exact enumeration in the negative phase (small models
    // only; used by the oracle-backed tests).
    bool exact_negative_phase = false;
    // Test-time marginal estimation.
    int predict_chains = 50;
    int predict_sweeps = 100;
    int predict_burnin = 50;
    // Cap on the number of noisy-train instances scored for the per-epoch
    // recovery metric; 0 means all.
    int eval_noisy_subset = 0;

    void check() const;
};

struct TrainState {
    EnergyParams params;
    FeatureNet net;
    Vec adam_m, adam_v;
    int64_t adam_t = 0;
    int epoch = 0;
    ChainStore chains;
    std::vector<std::string> metrics_log;  // one CSV line per epoch
    Variant variant = Variant::crf_hidden;
    Mode mode = Mode::multilabel;

    // Flat parameter order: [net | c | W | Wp].
    Vec flat_params() const;
    void set_flat_params(const Vec& theta);
    int param_count() const;
};

// Closed-form positive-phase moments with observed y and factorial q over
// (yhat, h).
SuffStats positive_phase_noisy(const Dims& dims, const LabelVector& y,
                               const FactorialPosterior& q);

// Clean-set counterpart: yhat observed too, q over h only.
SuffStats positive_phase_clean(const Dims& dims, const LabelVector& y, const LabelVector& yhat,
                               const Vec& q_h);

struct MinibatchItem {
    int64_t index = 0;
    bool is_clean = false;
};

// One EM iteration over a minibatch; returns the mean per-instance bound
// estimate (positive free energy + entropy of q, minus negative-phase free
// energy).
double em_step(TrainState& state, const LabeledDataset& data, const AuxModel& aux,
               const std::vector<MinibatchItem>& minibatch, double alpha,
               const TrainConfig& config);

TrainState init_state(const LabeledDataset& data, const TrainConfig& config);

// Full training loop (Gibbs/PCD negative phase, or analytic for the
// no-pairwise variant). Writes a checkpoint after every epoch when
// checkpoint_path is nonempty. If resume is nonnull, continues from it.
TrainState train(const LabeledDataset& data, const AuxModel& aux, const TrainConfig& config,
                 const std::string& checkpoint_path = "", TrainState* resume = nullptr);

// Sampling-free trainer for the no-pairwise variant; also handles empty D_C.
TrainState train_analytic_variant(const LabeledDataset& data, const AuxModel& aux,
                                  const TrainConfig& config,
                                  const std::string& checkpoint_path = "",
                                  TrainState* resume = nullptr);

// Exact per-instance bound of the analytic (no-pairwise) model; for tests.
double analytic_bound(const TrainState& state, const AuxModel& aux, const Vec& x,
                      const LabelVector& y, double alpha);

// Test-time scores over clean labels for the given instances: softmax or
// sigmoid of a(x) for analytic/CE variants, Gibbs-estimated marginals for
// CRF variants.
std::vector<Vec> predict_clean_scores(const TrainState& state, const LabeledDataset& data,
                                      const std::vector<int64_t>& indices,
                                      const TrainConfig& config);

// q's posterior over clean labels given the observed noisy label.
std::vector<Vec> recovery_scores(const TrainState& state, const LabeledDataset& data,
                                 const std::vector<int64_t>& indices, const AuxModel& aux,
                                 double alpha);

// Loss-correction baselines (multiclass): plain CE on noisy labels, forward
// correction, or backward correction with the given transition matrix. When
// T is singular the backward path falls back to a pseudo-inverse and logs
// the event to stderr.
enum class Correction { none, forward, backward };
TrainState train_corrected_baseline(const LabeledDataset& data, const Mat& T,
                                    Correction correction, const TrainConfig& config);

void save_checkpoint(const TrainState& state, const TrainConfig& config,
                     const std::string& path);
TrainState load_checkpoint(const std::string& path, const LabeledDataset& data,
                           const TrainConfig& config);

}  // namespace crfnoise
