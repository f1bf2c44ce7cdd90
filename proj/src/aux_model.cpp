#include "crfnoise/aux_model.hpp"

#include <cmath>

#include "crfnoise/container.hpp"
#include "crfnoise/crf.hpp"
#include "crfnoise/gibbs.hpp"
#include "crfnoise/math_util.hpp"

namespace crfnoise {

AuxRbm AuxRbm::zeros(int N, int C, int H_aux, Mode mode) {
    AuxRbm rbm;
    rbm.a = Vec::Zero(C);
    rbm.b = Vec::Zero(N);
    rbm.c = Vec::Zero(H_aux);
    rbm.W = Mat::Zero(C, N);
    rbm.Wp = Mat::Zero(H_aux, N);
    rbm.mode = mode;
    return rbm;
}

EnergyParams AuxRbm::as_energy_params() const {
    EnergyParams p;
    p.c = c;
    p.W = W;
    p.Wp = Wp;
    p.dims = {n_noisy(), n_clean(), n_hidden()};
    p.mode = mode;
    return p;
}

BiasPair AuxRbm::as_bias() const { return BiasPair{a, b}; }

void AuxRbm::check() const {
    as_energy_params().check();
    if (!a.allFinite() || !b.allFinite())
        throw std::invalid_argument("AuxRbm has non-finite biases");
}

void AuxTransition::check() const {
    int C = static_cast<int>(T.rows());
    if (T.cols() != C) throw DimError("AuxTransition: T must be square");
    for (int i = 0; i < C; ++i) {
        if (std::abs(T.row(i).sum() - 1.0) > 1e-9)
            throw std::invalid_argument("AuxTransition: T row " + std::to_string(i) +
                                        " does not sum to 1");
        if ((T.row(i).array() < 0.0).any())
            throw std::invalid_argument("AuxTransition: T has negative entries");
    }
}

Mode AuxModel::mode() const { return is_rbm() ? rbm->mode : Mode::multiclass; }

Vec AuxModel::aux_clean_logits(const LabelVector& y) const {
    if (is_rbm()) return rbm->a + rbm->W * y.bits;
    return transition->log_post.col(y.argmax());
}

Vec AuxModel::aux_hidden_logits(const LabelVector& y) const {
    if (!is_rbm()) return Vec::Zero(0);
    return rbm->c + rbm->Wp * y.bits;
}

int AuxModel::aux_hidden_count() const { return is_rbm() ? rbm->n_hidden() : 0; }

FactorialPosterior aux_cond(const AuxRbm& aux, const LabelVector& y) {
    return cond_clean_hidden(aux.as_energy_params(), aux.as_bias(), y);
}

Vec aux_transition_posterior(const AuxTransition& aux, int noisy_class) {
    return softmax(aux.log_post.col(noisy_class));
}

AuxTransition fit_aux_transition(const Mat& T, const Vec& prior_in) {
    AuxTransition aux;
    aux.T = T;
    aux.check();
    int C = static_cast<int>(T.rows());
    aux.prior = prior_in.size() == 0 ? Vec::Constant(C, 1.0 / C) : prior_in;
    if (aux.prior.size() != C) throw DimError("fit_aux_transition: prior length");

    // Column k: log p(yhat=i | y=k) = log prior_i + log T(i,k) - log norm.
    aux.log_post.resize(C, C);
    const double floor = 1e-300;
    for (int k = 0; k < C; ++k) {
        Vec scores(C);
        for (int i = 0; i < C; ++i)
            scores[i] = std::log(std::max(aux.prior[i] * T(i, k), floor));
        double norm = log_sum_exp(scores);
        aux.log_post.col(k) = scores.array() - norm;
    }
    return aux;
}

namespace {

SuffStats mean_stats(const std::vector<SuffStats>& parts, const Dims& d) {
    SuffStats acc = SuffStats::zeros(d);
    for (const auto& s : parts) acc += s;
    acc *= 1.0 / static_cast<double>(parts.size());
    return acc;
}

double stats_sq_norm(const SuffStats& s) {
    return s.e_yhat.squaredNorm() + s.e_y.squaredNorm() + s.e_h.squaredNorm() +
           s.e_yhat_y.squaredNorm() + s.e_h_y.squaredNorm();
}

}  // namespace

AuxRbm train_aux_rbm(const std::vector<std::pair<LabelVector, LabelVector>>& clean_set,
                     const AuxRbmTrainConfig& config, Mode mode) {
    if (clean_set.empty()) throw std::invalid_argument("train_aux_rbm: empty dataset");
    int N = clean_set.front().first.length();
    int C = clean_set.front().second.length();
    int H = config.hidden_units;
    Dims dims{N, C, H};

    AuxRbm rbm = AuxRbm::zeros(N, C, H, mode);
    Rng init_rng = Rng::from_key(config.seed, 0x617578ULL);
    for (int i = 0; i < C; ++i)
        for (int j = 0; j < N; ++j) rbm.W(i, j) = init_rng.normal(0.0, config.init_sigma);
    for (int i = 0; i < H; ++i)
        for (int j = 0; j < N; ++j) rbm.Wp(i, j) = init_rng.normal(0.0, config.init_sigma);

    // Persistent chains, seeded from random training points.
    std::vector<GibbsState> chains(config.chains);
    {
        EnergyParams p = rbm.as_energy_params();
        BiasPair bias = rbm.as_bias();
        for (int c = 0; c < config.chains; ++c) {
            Rng rng = Rng::from_key(config.seed, 0x636861696eULL, c);
            const auto& [y, yhat] = clean_set[rng.index(clean_set.size())];
            FactorialPosterior cond = cond_clean_hidden(p, bias, y);
            chains[c] = GibbsState{y, yhat, sample_labels(cond.p_hidden, Mode::multilabel, rng)};
        }
    }

    int mb = std::min<int>(config.minibatch_size, static_cast<int>(clean_set.size()));
    uint64_t step = 0;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        // Shuffled pass over the clean set.
        std::vector<size_t> order(clean_set.size());
        for (size_t i = 0; i < order.size(); ++i) order[i] = i;
        Rng shuffle_rng = Rng::from_key(config.seed, 0x73687566ULL, epoch);
        for (size_t i = order.size(); i > 1; --i)
            std::swap(order[i - 1], order[shuffle_rng.index(i)]);

        for (size_t start = 0; start + mb <= order.size(); start += mb, ++step) {
            EnergyParams p = rbm.as_energy_params();
            BiasPair bias = rbm.as_bias();

            // Positive phase: (y, yhat) observed, h analytically marginalized.
            std::vector<SuffStats> pos;
            for (int i = 0; i < mb; ++i) {
                const auto& [y, yhat] = clean_set[order[start + i]];
                Vec hm = sigmoid(hidden_logits(p, y));
                SuffStats s = SuffStats::zeros(dims);
                s.e_yhat = yhat.bits;
                s.e_y = y.bits;
                s.e_h = hm;
                s.e_yhat_y = yhat.bits * y.bits.transpose();
                s.e_h_y = hm * y.bits.transpose();
                pos.push_back(std::move(s));
            }
            SuffStats pos_mean = mean_stats(pos, dims);

            // Negative phase: advance the persistent chains.
            std::vector<SuffStats> neg;
            for (size_t c = 0; c < chains.size(); ++c) {
                Rng rng = Rng::from_key(config.seed, 0x6e6567ULL, c, step);
                for (int s = 0; s < config.sweeps_per_update; ++s)
                    chains[c] = gibbs_sweep(p, bias, chains[c], rng);
                FactorialPosterior cond = cond_clean_hidden(p, bias, chains[c].y);
                SuffStats s = SuffStats::zeros(dims);
                s.e_yhat = cond.p_clean;
                s.e_y = chains[c].y.bits;
                s.e_h = cond.p_hidden;
                s.e_yhat_y = cond.p_clean * chains[c].y.bits.transpose();
                s.e_h_y = cond.p_hidden * chains[c].y.bits.transpose();
                neg.push_back(std::move(s));
            }
            SuffStats neg_mean = mean_stats(neg, dims);

            SuffStats grad = pos_mean;
            grad.e_yhat -= neg_mean.e_yhat;
            grad.e_y -= neg_mean.e_y;
            grad.e_h -= neg_mean.e_h;
            grad.e_yhat_y -= neg_mean.e_yhat_y;
            grad.e_h_y -= neg_mean.e_h_y;

            double norm = std::sqrt(stats_sq_norm(grad));
            double scale = config.learning_rate;
            if (norm > config.clip_norm) scale *= config.clip_norm / norm;
            rbm.a += scale * grad.e_yhat;
            rbm.b += scale * grad.e_y;
            rbm.c += scale * grad.e_h;
            rbm.W += scale * grad.e_yhat_y;
            rbm.Wp += scale * grad.e_h_y;
        }
        if (!rbm.a.allFinite() || !rbm.b.allFinite() || !rbm.c.allFinite() ||
            !rbm.W.allFinite() || !rbm.Wp.allFinite())
            throw std::runtime_error("train_aux_rbm: parameters diverged (NaN/Inf) at epoch " +
                                     std::to_string(epoch));
    }
    return rbm;
}

void save_aux_model(const AuxModel& aux, const std::string& path) {
    container::Writer w("aux_model");
    if (aux.is_rbm()) {
        const AuxRbm& r = *aux.rbm;
        w.meta()["aux_kind"] = "rbm";
        w.meta()["mode"] = mode_name(r.mode);
        w.add_vec("a", r.a);
        w.add_vec("b", r.b);
        w.add_vec("c", r.c);
        w.add_mat("W", r.W);
        w.add_mat("Wp", r.Wp);
    } else if (aux.transition.has_value()) {
        w.meta()["aux_kind"] = "transition";
        w.add_mat("T", aux.transition->T);
        w.add_vec("prior", aux.transition->prior);
    } else {
        throw std::invalid_argument("save_aux_model: empty aux model");
    }
    w.write(path);
}

AuxModel load_aux_model(const std::string& path) {
    container::Reader r(path);
    if (r.kind() != "aux_model") throw std::runtime_error("not an aux model file: " + path);
    AuxModel aux;
    std::string kind = r.meta().at("aux_kind").get<std::string>();
    if (kind == "rbm") {
        AuxRbm rbm;
        rbm.mode = mode_from_name(r.meta().at("mode").get<std::string>());
        rbm.a = r.read_vec("a");
        rbm.b = r.read_vec("b");
        rbm.c = r.read_vec("c");
        rbm.W = r.read_mat("W");
        rbm.Wp = r.read_mat("Wp");
        rbm.check();
        aux.rbm = std::move(rbm);
    } else if (kind == "transition") {
        aux.transition = fit_aux_transition(r.read_mat("T"), r.read_vec("prior"));
    } else {
        throw std::runtime_error("unknown aux model kind: " + kind);
    }
    return aux;
}

}  // namespace crfnoise
