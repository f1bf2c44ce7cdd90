#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "crfnoise/types.hpp"

namespace crfnoise {

enum class Split : uint8_t { noisy_train = 0, clean_train = 1, val = 2, test = 3 };

struct NoiseSpec {
    enum class Kind { none, uniform, pair_flip, transition_matrix, multilabel_tagger };
    Kind kind = Kind::none;
    double rate = 0.0;
    std::optional<Mat> T;                  // transition_matrix
    std::vector<int> partner;              // pair_flip; partner[i] == i means no flip
    int tags_per_label_min = 1;            // multilabel_tagger
    int tags_per_label_max = 3;
    double background_rate = 0.05;

    static std::string kind_name(Kind k);
    static Kind kind_from_name(const std::string& s);
    // CIFAR-10 convention for C=10: cat<->dog, automobile->truck,
    // horse->deer; adjacent pairs for other class counts.
    static std::vector<int> default_partners(int C);
    // Row-stochastic transition implied by this spec (multiclass kinds only).
    Mat transition_matrix(int C) const;
    void check(Mode mode, int C) const;
};

class LabeledDataset {
  public:
    Mode mode = Mode::multilabel;
    int input_dim = 0;
    int n_noisy = 0;   // N
    int n_clean = 0;   // C
    Mat features;      // rows = instances
    std::vector<LabelVector> noisy_labels;
    std::vector<LabelVector> clean_labels;  // present for every row of synthetic data
    std::vector<uint8_t> splits;
    nlohmann::json provenance;

    size_t size() const { return noisy_labels.size(); }
    Vec x(size_t i) const { return features.row(static_cast<long>(i)).transpose(); }
    const LabelVector& y(size_t i) const { return noisy_labels[i]; }
    Split split(size_t i) const { return static_cast<Split>(splits[i]); }

    std::vector<int64_t> split_indices(Split s) const;

    // Clean label for training: only legal on the clean split.
    const LabelVector& clean_for_training(size_t i) const;

    // Hidden ground truth, for recovery-accuracy evaluation only. Kept as a
    // distinct accessor so the training path cannot reach it by accident.
    const LabelVector& eval_hidden_clean(size_t i) const;
    bool has_clean(size_t i) const {
        return i < clean_labels.size() && clean_labels[i].length() > 0;
    }

    void validate() const;
};

// Applies synthetic label noise; features untouched. Multiclass kinds expect
// one-hot rows; multilabel_tagger maps clean label sets to tag vectors.
std::vector<LabelVector> inject_noise(const std::vector<LabelVector>& clean_labels,
                                      const NoiseSpec& spec, int n_noisy, uint64_t seed);

struct SynthConfig {
    Mode mode = Mode::multiclass;
    int classes = 10;       // C
    int noisy_labels = 10;  // N (= classes in multiclass mode)
    int input_dim = 16;
    double separation = 3.0;
    int train_size = 1000;
    int val_size = 200;
    int test_size = 200;
    double clean_fraction = 0.2;
    NoiseSpec noise;
    uint64_t seed = 0;
};

LabeledDataset make_synthetic(const SynthConfig& config);

void save_dataset(const LabeledDataset& ds, const std::string& path);
LabeledDataset load_dataset(const std::string& path);

}  // namespace crfnoise
