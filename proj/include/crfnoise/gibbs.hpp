#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "crfnoise/rng.hpp"
#include "crfnoise/stats.hpp"
#include "crfnoise/types.hpp"

namespace crfnoise {

struct GibbsConfig {
    int sweeps_per_update = 100;
    uint64_t rng_seed = 0;
};

struct GibbsState {
    LabelVector y;
    LabelVector yhat;
    LabelVector h;
};

// One block sweep: (yhat, h) ~ p(.|y, x) jointly, then y ~ p(.|yhat, h, x).
GibbsState gibbs_sweep(const EnergyParams& params, const BiasPair& bias, const GibbsState& state,
                       Rng& rng);

// Sample a binary (or one-hot) vector from per-unit probabilities.
LabelVector sample_labels(const Vec& probs, Mode mode, Rng& rng);

enum class StoredSide { clean_hidden, noisy };

// Persistent chain states keyed by instance id, bit-packed. Each chain holds
// either the (yhat, h) block or the y block of its last state.
class ChainStore {
  public:
    ChainStore() = default;
    ChainStore(Dims dims, Mode mode, int chains_per_instance, StoredSide side);

    // Picks the smaller side to store, following the memory argument.
    static StoredSide default_side(const Dims& d) {
        return d.C + d.H < d.N ? StoredSide::clean_hidden : StoredSide::noisy;
    }

    bool has_instance(int64_t id) const { return chains_.count(id) > 0; }

    // Cold start: chains seeded from the observed noisy label plus a sample
    // of (yhat, h) from the model conditional.
    void init_instance(int64_t id, const EnergyParams& params, const BiasPair& bias,
                       const LabelVector& y_obs, uint64_t seed);

    LabelVector get(int64_t id, int chain) const;
    void set(int64_t id, int chain, const LabelVector& state);

    uint64_t update_counter(int64_t id) const { return counters_.at(id); }
    void bump_counter(int64_t id) { ++counters_[id]; }
    void set_counter(int64_t id, uint64_t v) { counters_[id] = v; }

    int chains_per_instance() const { return chains_per_instance_; }
    StoredSide side() const { return side_; }
    const Dims& dims() const { return dims_; }
    Mode mode() const { return mode_; }
    int state_width() const {
        return side_ == StoredSide::clean_hidden ? dims_.C + dims_.H : dims_.N;
    }
    size_t num_instances() const { return chains_.size(); }
    std::vector<int64_t> instance_ids() const;

    // Exact logical size: instances x chains x stored-state width, in bits.
    uint64_t size_bits() const {
        return static_cast<uint64_t>(chains_.size()) * chains_per_instance_ * state_width();
    }
    // Bytes actually held by the packed chain states.
    uint64_t packed_bytes() const;

  private:
    Dims dims_;
    Mode mode_ = Mode::multilabel;
    int chains_per_instance_ = 50;
    StoredSide side_ = StoredSide::clean_hidden;
    // per instance: chains_per_instance * ceil(width/8) packed bytes
    std::map<int64_t, std::vector<uint8_t>> chains_;
    std::map<int64_t, uint64_t> counters_;

  public:
    // Raw access for checkpoint serialization.
    const std::map<int64_t, std::vector<uint8_t>>& raw_chains() const { return chains_; }
    const std::map<int64_t, uint64_t>& raw_counters() const { return counters_; }
    void restore_raw(std::map<int64_t, std::vector<uint8_t>> chains,
                     std::map<int64_t, uint64_t> counters);
};

// Advances every chain of the given instance by config.sweeps_per_update
// sweeps, writes final states back, and returns Rao-Blackwellized moment
// estimates averaged over the instance's chains. The RNG stream is derived
// from (seed, id, chain, update-counter), so results are independent of the
// order instances are processed in.
SuffStats negative_phase_instance(const EnergyParams& params, const BiasPair& bias,
                                  ChainStore& store, int64_t id, const LabelVector& y_obs,
                                  const GibbsConfig& config);

}  // namespace crfnoise
