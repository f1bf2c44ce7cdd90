#include "crfnoise/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iostream>

#include "crfnoise/container.hpp"
#include "crfnoise/crf.hpp"
#include "crfnoise/math_util.hpp"
#include "crfnoise/oracle.hpp"

namespace crfnoise {

std::string variant_name(Variant v) {
    switch (v) {
        case Variant::no_pairwise: return "no_pairwise";
        case Variant::crf_no_hidden: return "crf_no_hidden";
        case Variant::crf_hidden: return "crf_hidden";
        case Variant::crf_no_xy: return "crf_no_xy";
        case Variant::clean_only_ce: return "clean_only_ce";
        case Variant::noisy_only_ce: return "noisy_only_ce";
    }
    return "crf_hidden";
}

Variant variant_from_name(const std::string& s) {
    if (s == "no_pairwise") return Variant::no_pairwise;
    if (s == "crf_no_hidden") return Variant::crf_no_hidden;
    if (s == "crf_hidden") return Variant::crf_hidden;
    if (s == "crf_no_xy") return Variant::crf_no_xy;
    if (s == "clean_only_ce") return Variant::clean_only_ce;
    if (s == "noisy_only_ce") return Variant::noisy_only_ce;
    throw std::invalid_argument("unknown variant: " + s);
}

void TrainConfig::check() const {
    if (epochs < 0 || minibatch_size <= 0) throw std::invalid_argument("TrainConfig: sizes");
    if (clean_fraction > 1.0) throw std::invalid_argument("TrainConfig: clean_fraction > 1");
    if (learning_rate <= 0.0) throw std::invalid_argument("TrainConfig: learning_rate <= 0");
    alpha.check();
}

Vec TrainState::flat_params() const {
    Vec theta(param_count());
    int off = 0;
    Vec np = net.get_params();
    theta.head(np.size()) = np;
    off += static_cast<int>(np.size());
    theta.segment(off, params.c.size()) = params.c;
    off += static_cast<int>(params.c.size());
    theta.segment(off, params.W.size()) = Eigen::Map<const Vec>(params.W.data(), params.W.size());
    off += static_cast<int>(params.W.size());
    theta.segment(off, params.Wp.size()) =
        Eigen::Map<const Vec>(params.Wp.data(), params.Wp.size());
    return theta;
}

void TrainState::set_flat_params(const Vec& theta) {
    int off = net.param_count();
    net.set_params(theta.head(off));
    params.c = theta.segment(off, params.c.size());
    off += static_cast<int>(params.c.size());
    Eigen::Map<Vec>(params.W.data(), params.W.size()) = theta.segment(off, params.W.size());
    off += static_cast<int>(params.W.size());
    Eigen::Map<Vec>(params.Wp.data(), params.Wp.size()) = theta.segment(off, params.Wp.size());
}

int TrainState::param_count() const {
    return net.param_count() + static_cast<int>(params.c.size() + params.W.size() +
                                                params.Wp.size());
}

SuffStats positive_phase_noisy(const Dims& dims, const LabelVector& y,
                               const FactorialPosterior& q) {
    SuffStats s = SuffStats::zeros(dims);
    s.e_yhat = q.p_clean;
    s.e_y = y.bits;
    s.e_h = q.p_hidden;
    s.e_yhat_y = q.p_clean * y.bits.transpose();
    s.e_h_y = q.p_hidden * y.bits.transpose();
    return s;
}

SuffStats positive_phase_clean(const Dims& dims, const LabelVector& y, const LabelVector& yhat,
                               const Vec& q_h) {
    SuffStats s = SuffStats::zeros(dims);
    s.e_yhat = yhat.bits;
    s.e_y = y.bits;
    s.e_h = q_h;
    s.e_yhat_y = yhat.bits * y.bits.transpose();
    s.e_h_y = q_h * y.bits.transpose();
    return s;
}

namespace {

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double free_energy(const EnergyParams& p, const BiasPair& bias, const SuffStats& s) {
    return bias.a.dot(s.e_yhat) + bias.b.dot(s.e_y) + p.c.dot(s.e_h) +
           p.W.cwiseProduct(s.e_yhat_y).sum() + p.Wp.cwiseProduct(s.e_h_y).sum();
}

double posterior_entropy(const FactorialPosterior& q) {
    double h = q.mode == Mode::multiclass ? categorical_entropy(q.p_clean) : 0.0;
    if (q.mode == Mode::multilabel)
        for (int i = 0; i < q.p_clean.size(); ++i) h += bernoulli_entropy(q.p_clean[i]);
    for (int j = 0; j < q.p_hidden.size(); ++j) h += bernoulli_entropy(q.p_hidden[j]);
    return h;
}

struct GradView {
    Vec grad;
    int net_size, H, W_size, Wp_size;

    explicit GradView(const TrainState& st)
        : grad(Vec::Zero(st.param_count())),
          net_size(st.net.param_count()),
          H(static_cast<int>(st.params.c.size())),
          W_size(static_cast<int>(st.params.W.size())),
          Wp_size(static_cast<int>(st.params.Wp.size())) {}

    void add_net(const Gradient& g) { grad.head(net_size) += g.values; }
    void add_crf(double w, const SuffStats& pos, const SuffStats& neg, const Dims& d) {
        grad.segment(net_size, H) += w * (pos.e_h - neg.e_h);
        Mat dW = pos.e_yhat_y - neg.e_yhat_y;
        grad.segment(net_size + H, W_size) += w * Eigen::Map<const Vec>(dW.data(), dW.size());
        Mat dWp = pos.e_h_y - neg.e_h_y;
        grad.segment(net_size + H + W_size, Wp_size) +=
            w * Eigen::Map<const Vec>(dWp.data(), dWp.size());
    }
};

void apply_update(TrainState& state, Vec ascent_grad, const TrainConfig& config) {
    if (!ascent_grad.allFinite())
        throw NumericError("em_step: non-finite gradient (training aborted)");
    double norm = ascent_grad.norm();
    if (config.clip_norm > 0.0 && norm > config.clip_norm)
        ascent_grad *= config.clip_norm / norm;

    Vec theta = state.flat_params();
    if (config.use_adam) {
        ++state.adam_t;
        state.adam_m = config.beta1 * state.adam_m + (1.0 - config.beta1) * ascent_grad;
        state.adam_v = config.beta2 * state.adam_v.array().matrix() +
                       (1.0 - config.beta2) * ascent_grad.cwiseProduct(ascent_grad);
        double bc1 = 1.0 - std::pow(config.beta1, static_cast<double>(state.adam_t));
        double bc2 = 1.0 - std::pow(config.beta2, static_cast<double>(state.adam_t));
        Vec mhat = state.adam_m / bc1;
        Vec vhat = state.adam_v / bc2;
        theta += config.learning_rate *
                 (mhat.array() / (vhat.array().sqrt() + config.adam_eps)).matrix();
    } else {
        theta += config.learning_rate * ascent_grad;
    }
    if (!theta.allFinite()) throw NumericError("optimizer produced non-finite parameters");
    state.set_flat_params(theta);
}

}  // namespace

double em_step(TrainState& state, const LabeledDataset& data, const AuxModel& aux,
               const std::vector<MinibatchItem>& minibatch, double alpha,
               const TrainConfig& config) {
    if (minibatch.empty()) throw std::invalid_argument("em_step: empty minibatch");
    const Dims& d = state.params.dims;
    int m_n = 0, m_c = 0;
    for (const auto& it : minibatch) (it.is_clean ? m_c : m_n)++;

    GibbsConfig gibbs = config.gibbs;
    gibbs.rng_seed = config.seed;

    GradView gv(state);
    double bound_acc = 0.0;
    for (const auto& it : minibatch) {
        auto idx = static_cast<size_t>(it.index);
        Vec x = data.x(idx);
        BiasPair bias = state.net.forward(x);
        const LabelVector& y = data.y(idx);
        double w = it.is_clean ? 1.0 / m_c : 1.0 / m_n;

        SuffStats pos, neg;
        double entropy;
        if (it.is_clean) {
            const LabelVector& yhat = data.clean_for_training(idx);
            Vec q_h = q_clean(state.params, aux, y, alpha);
            pos = positive_phase_clean(d, y, yhat, q_h);
            entropy = 0.0;
            for (int j = 0; j < q_h.size(); ++j) entropy += bernoulli_entropy(q_h[j]);
        } else {
            FactorialPosterior q = q_noisy(state.params, bias, aux, y, alpha);
            pos = positive_phase_noisy(d, y, q);
            entropy = posterior_entropy(q);
        }
        neg = config.exact_negative_phase
                  ? oracle::exact_marginals(state.params, bias)
                  : negative_phase_instance(state.params, bias, state.chains, it.index, y, gibbs);

        gv.add_crf(w, pos, neg, d);
        gv.add_net(state.net.backward(x, w * (pos.e_yhat - neg.e_yhat),
                                      w * (pos.e_y - neg.e_y)));
        bound_acc += free_energy(state.params, bias, pos) + entropy -
                     free_energy(state.params, bias, neg);
    }
    apply_update(state, std::move(gv.grad), config);
    return bound_acc / static_cast<double>(minibatch.size());
}

TrainState init_state(const LabeledDataset& data, const TrainConfig& config) {
    config.check();
    TrainState st;
    st.variant = config.variant;
    st.mode = data.mode;
    bool with_hidden =
        config.variant == Variant::crf_hidden || config.variant == Variant::crf_no_xy;
    Dims d{data.n_noisy, data.n_clean, with_hidden ? config.hidden_units : 0};
    st.params = EnergyParams::zeros(d, data.mode);
    bool emits_b = config.variant != Variant::crf_no_xy;
    st.net = FeatureNet(config.net_kind, data.input_dim, config.net_hidden, d.C, d.N, emits_b);
    st.net.init(config.seed);
    st.chains = ChainStore(d, data.mode, config.chains_per_instance, ChainStore::default_side(d));
    st.adam_m = Vec::Zero(st.param_count());
    st.adam_v = Vec::Zero(st.param_count());
    return st;
}

namespace {

std::vector<int64_t> shuffled(std::vector<int64_t> ids, uint64_t seed, uint64_t epoch,
                              uint64_t tag) {
    Rng rng = Rng::from_key(seed, 0x7368ULL, epoch, tag);
    for (size_t i = ids.size(); i > 1; --i) std::swap(ids[i - 1], ids[rng.index(i)]);
    return ids;
}

std::vector<std::vector<MinibatchItem>> build_minibatches(const LabeledDataset& data,
                                                          const TrainConfig& config, int epoch) {
    auto noisy = shuffled(data.split_indices(Split::noisy_train), config.seed, epoch, 1);
    auto clean = shuffled(data.split_indices(Split::clean_train), config.seed, epoch, 2);

    std::vector<std::vector<MinibatchItem>> out;
    if (config.clean_fraction < 0.0) {
        // Proportional mixing: one shuffled pass over the union.
        std::vector<MinibatchItem> all;
        for (int64_t i : noisy) all.push_back({i, false});
        for (int64_t i : clean) all.push_back({i, true});
        Rng rng = Rng::from_key(config.seed, 0x6d6978ULL, epoch);
        for (size_t i = all.size(); i > 1; --i) std::swap(all[i - 1], all[rng.index(i)]);
        for (size_t start = 0; start < all.size(); start += config.minibatch_size) {
            size_t end = std::min(all.size(), start + config.minibatch_size);
            out.emplace_back(all.begin() + static_cast<long>(start),
                             all.begin() + static_cast<long>(end));
        }
        return out;
    }

    int k_c = static_cast<int>(std::llround(config.clean_fraction * config.minibatch_size));
    k_c = std::min<int>(k_c, config.minibatch_size);
    int k_n = config.minibatch_size - k_c;
    if (k_n > 0 && noisy.empty()) k_n = 0;
    if (k_c > 0 && clean.empty()) k_c = 0;
    size_t n_batches = k_n > 0 ? (noisy.size() + k_n - 1) / k_n
                               : (clean.empty() ? 0 : (clean.size() + k_c - 1) / k_c);
    size_t ci = 0;
    for (size_t b = 0; b < n_batches; ++b) {
        std::vector<MinibatchItem> mb;
        for (int j = 0; j < k_n; ++j) {
            size_t pos = b * k_n + j;
            if (pos < noisy.size()) mb.push_back({noisy[pos], false});
        }
        for (int j = 0; j < k_c && !clean.empty(); ++j, ++ci)
            mb.push_back({clean[ci % clean.size()], true});
        if (!mb.empty()) out.push_back(std::move(mb));
    }
    return out;
}

std::vector<LabelVector> gather_clean(const LabeledDataset& data,
                                      const std::vector<int64_t>& ids) {
    std::vector<LabelVector> out;
    out.reserve(ids.size());
    for (int64_t i : ids) out.push_back(data.eval_hidden_clean(static_cast<size_t>(i)));
    return out;
}

double label_metric(const std::vector<Vec>& scores, const std::vector<LabelVector>& labels,
                    Mode mode) {
    if (scores.empty()) return std::nan("");
    return mode == Mode::multiclass ? accuracy(scores, labels)
                                    : mean_average_precision(scores, labels);
}

void log_epoch(TrainState& state, const LabeledDataset& data, const AuxModel* aux,
               const TrainConfig& config, int epoch, double alpha, double bound_mean) {
    auto val_ids = data.split_indices(Split::val);
    double val_metric = std::nan("");
    if (!val_ids.empty()) {
        auto scores = predict_clean_scores(state, data, val_ids, config);
        val_metric = label_metric(scores, gather_clean(data, val_ids), data.mode);
    }

    auto dn_ids = data.split_indices(Split::noisy_train);
    if (config.eval_noisy_subset > 0 &&
        dn_ids.size() > static_cast<size_t>(config.eval_noisy_subset))
        dn_ids.resize(config.eval_noisy_subset);
    double recovery = std::nan("");
    if (!dn_ids.empty() && data.has_clean(static_cast<size_t>(dn_ids.front()))) {
        bool variational = aux != nullptr && state.variant != Variant::clean_only_ce &&
                           state.variant != Variant::noisy_only_ce;
        auto scores = variational ? recovery_scores(state, data, dn_ids, *aux, alpha)
                                  : predict_clean_scores(state, data, dn_ids, config);
        recovery = label_metric(scores, gather_clean(data, dn_ids), data.mode);
    }

    state.metrics_log.push_back(std::to_string(epoch) + "," + fmt(alpha) + "," +
                                fmt(bound_mean) + "," + fmt(val_metric) + "," + fmt(recovery));
}

void maybe_checkpoint(const TrainState& state, const TrainConfig& config,
                      const std::string& path) {
    if (!path.empty()) save_checkpoint(state, config, path);
}

// Supervised cross-entropy trainers (clean-only / noisy-only baselines).
TrainState train_supervised_ce(const LabeledDataset& data, const TrainConfig& config,
                               const std::string& checkpoint_path, TrainState* resume) {
    bool clean_targets = config.variant == Variant::clean_only_ce;
    if (!clean_targets && data.mode == Mode::multiclass && data.n_noisy != data.n_clean)
        throw std::invalid_argument("noisy_only_ce requires N == C");

    TrainState state = resume ? std::move(*resume) : init_state(data, config);
    auto ids = data.split_indices(clean_targets ? Split::clean_train : Split::noisy_train);
    for (int epoch = state.epoch; epoch < config.epochs; ++epoch) {
        auto order = shuffled(ids, config.seed, epoch, 3);
        double loss_acc = 0.0;
        for (size_t start = 0; start < order.size(); start += config.minibatch_size) {
            size_t end = std::min(order.size(), start + config.minibatch_size);
            GradView gv(state);
            for (size_t i = start; i < end; ++i) {
                auto idx = static_cast<size_t>(order[i]);
                Vec x = data.x(idx);
                BiasPair bias = state.net.forward(x);
                Vec target = clean_targets ? data.clean_for_training(idx).bits
                                           : data.y(idx).bits;
                Vec p = data.mode == Mode::multiclass ? softmax(bias.a) : sigmoid(bias.a);
                double w = 1.0 / static_cast<double>(end - start);
                gv.add_net(state.net.backward(x, w * (target - p), Vec::Zero(data.n_noisy)));
                for (int k = 0; k < target.size(); ++k)
                    if (target[k] == 1.0) loss_acc -= std::log(std::max(p[k], 1e-300));
            }
            apply_update(state, std::move(gv.grad), config);
        }
        double mean_ll = ids.empty() ? 0.0 : -loss_acc / static_cast<double>(ids.size());
        log_epoch(state, data, nullptr, config, epoch, config.alpha.at(epoch), mean_ll);
        state.epoch = epoch + 1;
        maybe_checkpoint(state, config, checkpoint_path);
    }
    return state;
}

}  // namespace

TrainState train(const LabeledDataset& data, const AuxModel& aux, const TrainConfig& config,
                 const std::string& checkpoint_path, TrainState* resume) {
    config.check();
    data.validate();
    if (config.variant == Variant::no_pairwise)
        return train_analytic_variant(data, aux, config, checkpoint_path, resume);
    if (config.variant == Variant::clean_only_ce || config.variant == Variant::noisy_only_ce)
        return train_supervised_ce(data, config, checkpoint_path, resume);

    TrainState state = resume ? std::move(*resume) : init_state(data, config);
    for (int epoch = state.epoch; epoch < config.epochs; ++epoch) {
        double alpha = config.alpha.at(epoch);
        auto minibatches = build_minibatches(data, config, epoch);
        double bound_acc = 0.0;
        for (const auto& mb : minibatches)
            bound_acc += em_step(state, data, aux, mb, alpha, config);
        double bound_mean =
            minibatches.empty() ? 0.0 : bound_acc / static_cast<double>(minibatches.size());
        log_epoch(state, data, &aux, config, epoch, alpha, bound_mean);
        state.epoch = epoch + 1;
        maybe_checkpoint(state, config, checkpoint_path);
    }
    return state;
}

TrainState train_analytic_variant(const LabeledDataset& data, const AuxModel& aux,
                                  const TrainConfig& config, const std::string& checkpoint_path,
                                  TrainState* resume) {
    if (config.variant != Variant::no_pairwise)
        throw std::invalid_argument("train_analytic_variant requires the no_pairwise variant");
    TrainState state = resume ? std::move(*resume) : init_state(data, config);

    for (int epoch = state.epoch; epoch < config.epochs; ++epoch) {
        double alpha = config.alpha.at(epoch);
        auto minibatches = build_minibatches(data, config, epoch);
        double bound_acc = 0.0;
        size_t n_items = 0;
        for (const auto& mb : minibatches) {
            int m_n = 0, m_c = 0;
            for (const auto& it : mb) (it.is_clean ? m_c : m_n)++;
            GradView gv(state);
            for (const auto& it : mb) {
                auto idx = static_cast<size_t>(it.index);
                Vec x = data.x(idx);
                BiasPair bias = state.net.forward(x);
                const LabelVector& y = data.y(idx);
                double w = it.is_clean ? 1.0 / m_c : 1.0 / m_n;

                Vec p_clean = data.mode == Mode::multiclass ? softmax(bias.a) : sigmoid(bias.a);
                Vec p_noisy = data.mode == Mode::multiclass ? softmax(bias.b) : sigmoid(bias.b);
                Vec target_clean;
                if (it.is_clean) {
                    target_clean = data.clean_for_training(idx).bits;
                } else {
                    Vec blended = (bias.a + alpha * aux.aux_clean_logits(y)) / (alpha + 1.0);
                    target_clean =
                        data.mode == Mode::multiclass ? softmax(blended) : sigmoid(blended);
                }
                gv.add_net(state.net.backward(x, w * (target_clean - p_clean),
                                              w * (y.bits - p_noisy)));
                bound_acc += analytic_bound(state, aux, x, y, it.is_clean ? 0.0 : alpha);
                ++n_items;
            }
            apply_update(state, std::move(gv.grad), config);
        }
        double bound_mean = n_items == 0 ? 0.0 : bound_acc / static_cast<double>(n_items);
        log_epoch(state, data, &aux, config, epoch, alpha, bound_mean);
        state.epoch = epoch + 1;
        maybe_checkpoint(state, config, checkpoint_path);
    }
    return state;
}

double analytic_bound(const TrainState& state, const AuxModel& aux, const Vec& x,
                      const LabelVector& y, double alpha) {
    BiasPair bias = state.net.forward(x);
    double log_py;
    FactorialPosterior p_model, p_aux, q;
    p_model.mode = p_aux.mode = q.mode = state.mode;
    p_model.p_hidden = p_aux.p_hidden = q.p_hidden = Vec::Zero(0);
    Vec aux_logits = aux.aux_clean_logits(y);
    Vec blended = (bias.a + alpha * aux_logits) / (alpha + 1.0);
    if (state.mode == Mode::multiclass) {
        Vec logp_noisy = bias.b.array() - log_sum_exp(bias.b);
        log_py = logp_noisy[y.argmax()];
        p_model.p_clean = softmax(bias.a);
        p_aux.p_clean = softmax(aux_logits);
        q.p_clean = softmax(blended);
    } else {
        log_py = 0.0;
        for (int j = 0; j < y.length(); ++j)
            log_py += y.bits[j] == 1.0 ? -softplus(-bias.b[j]) : -softplus(bias.b[j]);
        p_model.p_clean = sigmoid(bias.a);
        p_aux.p_clean = sigmoid(aux_logits);
        q.p_clean = sigmoid(blended);
    }
    return log_py - kl_objective(q, p_model, p_aux, alpha);
}

std::vector<Vec> predict_clean_scores(const TrainState& state, const LabeledDataset& data,
                                      const std::vector<int64_t>& indices,
                                      const TrainConfig& config) {
    std::vector<Vec> out;
    out.reserve(indices.size());
    bool direct = state.variant == Variant::no_pairwise ||
                  state.variant == Variant::clean_only_ce ||
                  state.variant == Variant::noisy_only_ce;
    for (int64_t idx : indices) {
        Vec x = data.x(static_cast<size_t>(idx));
        BiasPair bias = state.net.forward(x);
        if (direct) {
            out.push_back(state.mode == Mode::multiclass ? softmax(bias.a) : sigmoid(bias.a));
            continue;
        }
        // Marginal p(yhat | x) from fresh Gibbs chains.
        Vec acc = Vec::Zero(data.n_clean);
        long count = 0;
        for (int c = 0; c < config.predict_chains; ++c) {
            Rng rng = Rng::from_key(config.seed, 0x70726564ULL, static_cast<uint64_t>(idx), c);
            Vec p0 = state.mode == Mode::multiclass ? softmax(bias.b) : sigmoid(bias.b);
            GibbsState gs;
            gs.y = sample_labels(p0, state.mode, rng);
            FactorialPosterior cond = cond_clean_hidden(state.params, bias, gs.y);
            gs.yhat = sample_labels(cond.p_clean, state.mode, rng);
            gs.h = sample_labels(cond.p_hidden, Mode::multilabel, rng);
            for (int s = 0; s < config.predict_burnin + config.predict_sweeps; ++s) {
                gs = gibbs_sweep(state.params, bias, gs, rng);
                if (s >= config.predict_burnin) {
                    acc += cond_clean_hidden(state.params, bias, gs.y).p_clean;
                    ++count;
                }
            }
        }
        out.push_back(acc / static_cast<double>(count));
    }
    return out;
}

std::vector<Vec> recovery_scores(const TrainState& state, const LabeledDataset& data,
                                 const std::vector<int64_t>& indices, const AuxModel& aux,
                                 double alpha) {
    std::vector<Vec> out;
    out.reserve(indices.size());
    for (int64_t idx : indices) {
        Vec x = data.x(static_cast<size_t>(idx));
        BiasPair bias = state.net.forward(x);
        const LabelVector& y = data.y(static_cast<size_t>(idx));
        if (state.variant == Variant::no_pairwise) {
            Vec blended = (bias.a + alpha * aux.aux_clean_logits(y)) / (alpha + 1.0);
            out.push_back(state.mode == Mode::multiclass ? softmax(blended) : sigmoid(blended));
        } else {
            out.push_back(q_noisy(state.params, bias, aux, y, alpha).p_clean);
        }
    }
    return out;
}

TrainState train_corrected_baseline(const LabeledDataset& data, const Mat& T,
                                    Correction correction, const TrainConfig& config) {
    if (data.mode != Mode::multiclass)
        throw std::invalid_argument("corrected baselines are multiclass only");
    TrainState state = init_state(data, config);

    Mat inv;
    if (correction == Correction::backward) {
        try {
            inv = backward_inverse(T);
        } catch (const NumericError&) {
            std::cerr << "backward baseline: T singular, using pseudo-inverse\n";
            inv = T.completeOrthogonalDecomposition().pseudoInverse();
        }
    }

    auto ids = data.split_indices(Split::noisy_train);
    for (int epoch = state.epoch; epoch < config.epochs; ++epoch) {
        auto order = shuffled(ids, config.seed, epoch, 4);
        double loss_acc = 0.0;
        for (size_t start = 0; start < order.size(); start += config.minibatch_size) {
            size_t end = std::min(order.size(), start + config.minibatch_size);
            GradView gv(state);
            for (size_t i = start; i < end; ++i) {
                auto idx = static_cast<size_t>(order[i]);
                Vec x = data.x(idx);
                BiasPair bias = state.net.forward(x);
                Vec p = softmax(bias.a);
                int noisy = data.y(idx).argmax();
                double w = 1.0 / static_cast<double>(end - start);
                Vec grad_a(p.size());
                switch (correction) {
                    case Correction::none:
                        grad_a = Vec::Unit(p.size(), noisy) - p;
                        loss_acc -= std::log(std::max(p[noisy], 1e-300));
                        break;
                    case Correction::forward: {
                        double mixed = std::max(T.col(noisy).dot(p), 1e-12);
                        grad_a = (T.col(noisy).cwiseProduct(p) / mixed) - p;
                        loss_acc -= std::log(mixed);
                        break;
                    }
                    case Correction::backward: {
                        double rowsum = inv.row(noisy).sum();
                        grad_a = inv.row(noisy).transpose() - rowsum * p;
                        for (int k = 0; k < p.size(); ++k)
                            loss_acc -= inv(noisy, k) * std::log(std::max(p[k], 1e-300));
                        break;
                    }
                }
                gv.add_net(state.net.backward(x, w * grad_a, Vec::Zero(data.n_noisy)));
            }
            apply_update(state, std::move(gv.grad), config);
        }
        double mean_ll = ids.empty() ? 0.0 : -loss_acc / static_cast<double>(ids.size());
        log_epoch(state, data, nullptr, config, epoch, 0.0, mean_ll);
        state.epoch = epoch + 1;
    }
    return state;
}

void save_checkpoint(const TrainState& state, const TrainConfig& config,
                     const std::string& path) {
    container::Writer w("checkpoint");
    auto& meta = w.meta();
    meta["epoch"] = state.epoch;
    meta["adam_t"] = state.adam_t;
    meta["variant"] = variant_name(state.variant);
    meta["mode"] = mode_name(state.mode);
    meta["dims"] = {state.params.dims.N, state.params.dims.C, state.params.dims.H};
    meta["seed"] = config.seed;

    w.add_vec("theta", state.flat_params());
    w.add_vec("adam_m", state.adam_m);
    w.add_vec("adam_v", state.adam_v);

    std::vector<uint64_t> ids, counters;
    std::vector<uint8_t> chain_bytes;
    for (const auto& [id, bytes] : state.chains.raw_chains()) {
        ids.push_back(static_cast<uint64_t>(id));
        counters.push_back(state.chains.raw_counters().at(id));
        chain_bytes.insert(chain_bytes.end(), bytes.begin(), bytes.end());
    }
    w.add_u64("chain_ids", ids);
    w.add_u64("chain_counters", counters);
    w.add_u8("chain_states", chain_bytes);

    std::string log;
    for (const auto& line : state.metrics_log) log += line + "\n";
    w.add_text("metrics_log", log);
    w.write(path);
}

TrainState load_checkpoint(const std::string& path, const LabeledDataset& data,
                           const TrainConfig& config) {
    container::Reader r(path);
    if (r.kind() != "checkpoint") throw std::runtime_error("not a checkpoint file: " + path);
    TrainState state = init_state(data, config);
    auto dims = r.meta().at("dims");
    if (dims[0] != state.params.dims.N || dims[1] != state.params.dims.C ||
        dims[2] != state.params.dims.H ||
        r.meta().at("variant").get<std::string>() != variant_name(config.variant))
        throw std::runtime_error("checkpoint incompatible with config/dataset");

    state.epoch = r.meta().at("epoch").get<int>();
    state.adam_t = r.meta().at("adam_t").get<int64_t>();
    state.set_flat_params(r.read_vec("theta"));
    state.adam_m = r.read_vec("adam_m");
    state.adam_v = r.read_vec("adam_v");

    auto ids = r.read_u64("chain_ids");
    auto counters = r.read_u64("chain_counters");
    auto chain_bytes = r.read_u8("chain_states");
    size_t stride = static_cast<size_t>((state.chains.state_width() + 7) / 8) *
                    state.chains.chains_per_instance();
    if (chain_bytes.size() != stride * ids.size())
        throw std::runtime_error("checkpoint chain block size mismatch");
    std::map<int64_t, std::vector<uint8_t>> chains;
    std::map<int64_t, uint64_t> counter_map;
    for (size_t i = 0; i < ids.size(); ++i) {
        auto id = static_cast<int64_t>(ids[i]);
        chains[id] = {chain_bytes.begin() + static_cast<long>(i * stride),
                      chain_bytes.begin() + static_cast<long>((i + 1) * stride)};
        counter_map[id] = counters[i];
    }
    state.chains.restore_raw(std::move(chains), std::move(counter_map));

    std::string log = r.read_text("metrics_log");
    state.metrics_log.clear();
    size_t pos = 0;
    while (pos < log.size()) {
        size_t nl = log.find('\n', pos);
        if (nl == std::string::npos) nl = log.size();
        if (nl > pos) state.metrics_log.push_back(log.substr(pos, nl - pos));
        pos = nl + 1;
    }
    return state;
}

}  // namespace crfnoise
