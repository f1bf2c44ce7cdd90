#include "crfnoise/oracle.hpp"

#include <cmath>
#include <vector>

#include "crfnoise/crf.hpp"
#include "crfnoise/math_util.hpp"

namespace crfnoise {
namespace oracle {

namespace {

// All binary vectors of a block, or the one-hots only in multiclass mode.
// h is always enumerated as free binary even in multiclass mode.
std::vector<LabelVector> block_configs(int len, Mode mode, bool one_hot) {
    std::vector<LabelVector> out;
    if (one_hot && mode == Mode::multiclass) {
        for (int i = 0; i < len; ++i) out.push_back(LabelVector::one_hot(len, i));
        return out;
    }
    if (len == 0) {
        out.push_back(LabelVector(Vec::Zero(0), Mode::multilabel));
        return out;
    }
    for (uint64_t mask = 0; mask < (1ULL << len); ++mask) {
        Vec v(len);
        for (int i = 0; i < len; ++i) v[i] = (mask >> (len - 1 - i)) & 1 ? 1.0 : 0.0;
        out.push_back(LabelVector(std::move(v), Mode::multilabel));
    }
    return out;
}

}  // namespace

void check_limit(const Dims& dims, const EnumerationLimit& limit) {
    if (dims.total() > limit.max_total_units)
        throw std::invalid_argument("oracle: model exceeds enumeration limit (" +
                                    std::to_string(dims.total()) + " > " +
                                    std::to_string(limit.max_total_units) + " units)");
}

void for_each_config(const Dims& dims, Mode mode,
                     const std::function<void(const LabelVector&, const LabelVector&,
                                              const LabelVector&)>& fn) {
    auto ys = block_configs(dims.N, mode, true);
    auto yhats = block_configs(dims.C, mode, true);
    auto hs = block_configs(dims.H, mode, false);
    for (const auto& y : ys)
        for (const auto& yhat : yhats)
            for (const auto& h : hs) fn(y, yhat, h);
}

void for_each_clean_hidden(const Dims& dims, Mode mode,
                           const std::function<void(const LabelVector&, const LabelVector&)>& fn) {
    auto yhats = block_configs(dims.C, mode, true);
    auto hs = block_configs(dims.H, mode, false);
    for (const auto& yhat : yhats)
        for (const auto& h : hs) fn(yhat, h);
}

double log_partition(const EnergyParams& params, const BiasPair& bias,
                     const EnumerationLimit& limit) {
    check_limit(params.dims, limit);
    double max_lp = -std::numeric_limits<double>::infinity();
    std::vector<double> lps;
    for_each_config(params.dims, params.mode,
                    [&](const LabelVector& y, const LabelVector& yhat, const LabelVector& h) {
                        double lp = -energy(params, bias, y, yhat, h);
                        lps.push_back(lp);
                        max_lp = std::max(max_lp, lp);
                    });
    double acc = 0.0;
    for (double lp : lps) acc += std::exp(lp - max_lp);
    return max_lp + std::log(acc);
}

double partition_direct(const EnergyParams& params, const BiasPair& bias,
                        const EnumerationLimit& limit) {
    check_limit(params.dims, limit);
    double z = 0.0;
    for_each_config(params.dims, params.mode,
                    [&](const LabelVector& y, const LabelVector& yhat, const LabelVector& h) {
                        z += std::exp(-energy(params, bias, y, yhat, h));
                    });
    return z;
}

SuffStats exact_marginals(const EnergyParams& params, const BiasPair& bias,
                          const EnumerationLimit& limit) {
    check_limit(params.dims, limit);
    double log_z = log_partition(params, bias, limit);
    SuffStats stats = SuffStats::zeros(params.dims);
    for_each_config(params.dims, params.mode,
                    [&](const LabelVector& y, const LabelVector& yhat, const LabelVector& h) {
                        double p = std::exp(-energy(params, bias, y, yhat, h) - log_z);
                        stats.e_yhat += p * yhat.bits;
                        stats.e_y += p * y.bits;
                        stats.e_h += p * h.bits;
                        stats.e_yhat_y += p * yhat.bits * y.bits.transpose();
                        stats.e_h_y += p * h.bits * y.bits.transpose();
                    });
    return stats;
}

FactorialPosterior exact_conditional(const EnergyParams& params, const BiasPair& bias,
                                     const LabelVector& y, const EnumerationLimit& limit) {
    check_limit(params.dims, limit);
    double z = 0.0;
    Vec num_clean = Vec::Zero(params.dims.C);
    Vec num_hidden = Vec::Zero(params.dims.H);
    for_each_clean_hidden(params.dims, params.mode,
                          [&](const LabelVector& yhat, const LabelVector& h) {
                              double w = std::exp(-energy(params, bias, y, yhat, h));
                              z += w;
                              num_clean += w * yhat.bits;
                              num_hidden += w * h.bits;
                          });
    FactorialPosterior post;
    post.mode = params.mode;
    post.p_clean = num_clean / z;
    post.p_hidden = num_hidden / z;
    return post;
}

Vec exact_hidden_conditional(const EnergyParams& params, const LabelVector& y,
                             const EnumerationLimit& limit) {
    // h depends on y only; the factorial form is exact, but recompute it by
    // enumeration so this stays an independent route.
    check_limit(params.dims, limit);
    auto hs = block_configs(params.dims.H, Mode::multilabel, false);
    double z = 0.0;
    Vec num = Vec::Zero(params.dims.H);
    Vec logits = params.c + params.Wp * y.bits;
    for (const auto& h : hs) {
        double w = std::exp(logits.dot(h.bits));
        z += w;
        num += w * h.bits;
    }
    return num / z;
}

double log_marginal_noisy(const EnergyParams& params, const BiasPair& bias,
                          const LabelVector& y, const EnumerationLimit& limit) {
    check_limit(params.dims, limit);
    double log_z = log_partition(params, bias, limit);
    std::vector<double> lps;
    for_each_clean_hidden(params.dims, params.mode,
                          [&](const LabelVector& yhat, const LabelVector& h) {
                              lps.push_back(-energy(params, bias, y, yhat, h));
                          });
    return log_sum_exp(Eigen::Map<const Vec>(lps.data(), lps.size())) - log_z;
}

double log_marginal_clean(const EnergyParams& params, const BiasPair& bias,
                          const LabelVector& y, const LabelVector& yhat,
                          const EnumerationLimit& limit) {
    check_limit(params.dims, limit);
    double log_z = log_partition(params, bias, limit);
    auto hs = block_configs(params.dims.H, Mode::multilabel, false);
    std::vector<double> lps;
    for (const auto& h : hs) lps.push_back(-energy(params, bias, y, yhat, h));
    return log_sum_exp(Eigen::Map<const Vec>(lps.data(), lps.size())) - log_z;
}

double factorial_prob(const FactorialPosterior& q, const LabelVector& yhat,
                      const LabelVector& h) {
    double p = 1.0;
    if (q.mode == Mode::multiclass) {
        p *= q.p_clean[yhat.argmax()];
    } else {
        for (int i = 0; i < q.p_clean.size(); ++i)
            p *= yhat.bits[i] == 1.0 ? q.p_clean[i] : 1.0 - q.p_clean[i];
    }
    for (int j = 0; j < q.p_hidden.size(); ++j)
        p *= h.bits[j] == 1.0 ? q.p_hidden[j] : 1.0 - q.p_hidden[j];
    return p;
}

double exact_bound(const EnergyParams& params, const BiasPair& bias, const LabelVector& y,
                   const FactorialPosterior& q, const FactorialPosterior& aux_cond, double alpha,
                   const EnumerationLimit& limit) {
    check_limit(params.dims, limit);
    double log_py = log_marginal_noisy(params, bias, y, limit);
    double log_z = log_partition(params, bias, limit);

    // KL[q || p_model(yhat,h|y,x)] and KL[q || p_aux(yhat,h|y)] by summing
    // over every (yhat, h) configuration.
    double kl_model = 0.0;
    double kl_aux = 0.0;
    for_each_clean_hidden(
        params.dims, params.mode, [&](const LabelVector& yhat, const LabelVector& h) {
            double qp = factorial_prob(q, yhat, h);
            if (qp <= 0.0) return;
            double log_p_model = -energy(params, bias, y, yhat, h) - log_z - log_py;
            kl_model += qp * (std::log(qp) - log_p_model);
            double ap = factorial_prob(aux_cond, yhat, h);
            kl_aux += qp * (std::log(qp) - std::log(std::max(ap, 1e-300)));
        });
    return log_py - kl_model - alpha * kl_aux;
}

double exact_bound_clean(const EnergyParams& params, const BiasPair& bias, const LabelVector& y,
                         const LabelVector& yhat, const Vec& q_h, const Vec& aux_h, double alpha,
                         const EnumerationLimit& limit) {
    check_limit(params.dims, limit);
    double log_pyy = log_marginal_clean(params, bias, y, yhat, limit);
    Vec model_h_logits = params.c + params.Wp * y.bits;
    Vec p_model = sigmoid(model_h_logits);

    double kl_model = 0.0;
    double kl_aux = 0.0;
    auto hs = block_configs(params.dims.H, Mode::multilabel, false);
    for (const auto& h : hs) {
        double qp = 1.0, mp = 1.0, ap = 1.0;
        for (int j = 0; j < params.dims.H; ++j) {
            bool on = h.bits[j] == 1.0;
            qp *= on ? q_h[j] : 1.0 - q_h[j];
            mp *= on ? p_model[j] : 1.0 - p_model[j];
            ap *= on ? aux_h[j] : 1.0 - aux_h[j];
        }
        if (qp <= 0.0) continue;
        kl_model += qp * (std::log(qp) - std::log(std::max(mp, 1e-300)));
        kl_aux += qp * (std::log(qp) - std::log(std::max(ap, 1e-300)));
    }
    return log_pyy - kl_model - alpha * kl_aux;
}

}  // namespace oracle
}  // namespace crfnoise
