#include "crfnoise/gibbs.hpp"

#include "crfnoise/crf.hpp"
#include "crfnoise/math_util.hpp"

namespace crfnoise {

LabelVector sample_labels(const Vec& probs, Mode mode, Rng& rng) {
    int n = static_cast<int>(probs.size());
    if (mode == Mode::multiclass) {
        double u = rng.uniform();
        double acc = 0.0;
        int pick = n - 1;
        for (int i = 0; i < n; ++i) {
            acc += probs[i];
            if (u < acc) {
                pick = i;
                break;
            }
        }
        return LabelVector::one_hot(n, pick);
    }
    Vec v(n);
    for (int i = 0; i < n; ++i) v[i] = rng.bernoulli(probs[i]) ? 1.0 : 0.0;
    return LabelVector(std::move(v), Mode::multilabel);
}

GibbsState gibbs_sweep(const EnergyParams& params, const BiasPair& bias, const GibbsState& state,
                       Rng& rng) {
    FactorialPosterior cond = cond_clean_hidden(params, bias, state.y);
    GibbsState next;
    next.yhat = sample_labels(cond.p_clean, params.mode, rng);
    next.h = sample_labels(cond.p_hidden, Mode::multilabel, rng);
    Vec py = cond_noisy(params, bias, next.yhat, next.h);
    next.y = sample_labels(py, params.mode, rng);
    return next;
}

namespace {

size_t packed_state_bytes(int width) { return (width + 7) / 8; }

void pack_bits(const Vec& bits, uint8_t* out) {
    size_t nbytes = packed_state_bytes(static_cast<int>(bits.size()));
    for (size_t b = 0; b < nbytes; ++b) out[b] = 0;
    for (int i = 0; i < bits.size(); ++i)
        if (bits[i] == 1.0) out[i / 8] |= static_cast<uint8_t>(1u << (i % 8));
}

Vec unpack_bits(const uint8_t* in, int width) {
    Vec bits(width);
    for (int i = 0; i < width; ++i) bits[i] = (in[i / 8] >> (i % 8)) & 1 ? 1.0 : 0.0;
    return bits;
}

}  // namespace

ChainStore::ChainStore(Dims dims, Mode mode, int chains_per_instance, StoredSide side)
    : dims_(dims), mode_(mode), chains_per_instance_(chains_per_instance), side_(side) {
    if (chains_per_instance <= 0)
        throw std::invalid_argument("ChainStore: chains_per_instance must be positive");
}

void ChainStore::init_instance(int64_t id, const EnergyParams& params, const BiasPair& bias,
                               const LabelVector& y_obs, uint64_t seed) {
    if (has_instance(id)) return;
    size_t stride = packed_state_bytes(state_width());
    std::vector<uint8_t> packed(stride * chains_per_instance_, 0);
    for (int c = 0; c < chains_per_instance_; ++c) {
        Rng rng = Rng::from_key(seed, 0x636f6c64ULL, static_cast<uint64_t>(id), c);
        FactorialPosterior cond = cond_clean_hidden(params, bias, y_obs);
        LabelVector yhat = sample_labels(cond.p_clean, mode_, rng);
        LabelVector h = sample_labels(cond.p_hidden, Mode::multilabel, rng);
        Vec state;
        if (side_ == StoredSide::clean_hidden) {
            state.resize(dims_.C + dims_.H);
            state << yhat.bits, h.bits;
        } else {
            state = y_obs.bits;
        }
        pack_bits(state, packed.data() + c * stride);
    }
    chains_[id] = std::move(packed);
    counters_[id] = 0;
}

LabelVector ChainStore::get(int64_t id, int chain) const {
    size_t stride = packed_state_bytes(state_width());
    const auto& packed = chains_.at(id);
    Vec bits = unpack_bits(packed.data() + chain * stride, state_width());
    return LabelVector(std::move(bits), Mode::multilabel);
}

void ChainStore::set(int64_t id, int chain, const LabelVector& state) {
    if (state.length() != state_width()) throw DimError("ChainStore::set: state width");
    size_t stride = packed_state_bytes(state_width());
    pack_bits(state.bits, chains_.at(id).data() + chain * stride);
}

std::vector<int64_t> ChainStore::instance_ids() const {
    std::vector<int64_t> ids;
    ids.reserve(chains_.size());
    for (const auto& [id, _] : chains_) ids.push_back(id);
    return ids;
}

uint64_t ChainStore::packed_bytes() const {
    uint64_t total = 0;
    for (const auto& [_, packed] : chains_) total += packed.size();
    return total;
}

void ChainStore::restore_raw(std::map<int64_t, std::vector<uint8_t>> chains,
                             std::map<int64_t, uint64_t> counters) {
    chains_ = std::move(chains);
    counters_ = std::move(counters);
}

SuffStats negative_phase_instance(const EnergyParams& params, const BiasPair& bias,
                                  ChainStore& store, int64_t id, const LabelVector& y_obs,
                                  const GibbsConfig& config) {
    if (!store.has_instance(id))
        store.init_instance(id, params, bias, y_obs, config.rng_seed);
    const Dims& d = params.dims;
    SuffStats acc = SuffStats::zeros(d);
    uint64_t counter = store.update_counter(id);
    for (int c = 0; c < store.chains_per_instance(); ++c) {
        Rng rng = Rng::from_key(config.rng_seed, static_cast<uint64_t>(id), c, counter);
        LabelVector stored = store.get(id, c);
        GibbsState state;
        if (store.side() == StoredSide::clean_hidden) {
            Mode m = params.mode;
            state.yhat = LabelVector(stored.bits.head(d.C), m == Mode::multiclass ? m
                                                                                  : Mode::multilabel);
            state.h = LabelVector(stored.bits.tail(d.H), Mode::multilabel);
            // Complete the state: the first block update of a sweep needs y.
            state.y = sample_labels(cond_noisy(params, bias, state.yhat, state.h), params.mode, rng);
        } else {
            state.y = LabelVector(stored.bits, params.mode);
            FactorialPosterior cond = cond_clean_hidden(params, bias, state.y);
            state.yhat = sample_labels(cond.p_clean, params.mode, rng);
            state.h = sample_labels(cond.p_hidden, Mode::multilabel, rng);
        }
        for (int s = 0; s < config.sweeps_per_update; ++s)
            state = gibbs_sweep(params, bias, state, rng);

        // Rao-Blackwellized moments given the final y.
        FactorialPosterior cond = cond_clean_hidden(params, bias, state.y);
        acc.e_yhat += cond.p_clean;
        acc.e_h += cond.p_hidden;
        acc.e_y += state.y.bits;
        acc.e_yhat_y += cond.p_clean * state.y.bits.transpose();
        acc.e_h_y += cond.p_hidden * state.y.bits.transpose();

        if (store.side() == StoredSide::clean_hidden) {
            Vec packed(d.C + d.H);
            packed << state.yhat.bits, state.h.bits;
            store.set(id, c, LabelVector(std::move(packed), Mode::multilabel));
        } else {
            store.set(id, c, LabelVector(state.y.bits, Mode::multilabel));
        }
    }
    store.bump_counter(id);
    acc *= 1.0 / store.chains_per_instance();
    return acc;
}

}  // namespace crfnoise
