#pragma once

#include <json.hpp>
#include <vector>

#include "crfnoise/types.hpp"

namespace crfnoise {

struct NumericError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MetricReport {
    double prediction_accuracy = 0.0;  // percent
    double recovery_accuracy = 0.0;    // percent
    double map = 0.0;                  // percent, multilabel
    std::vector<double> per_class;     // percent per clean class

    nlohmann::json to_json() const;
};

// Multiclass argmax accuracy, in percent.
double accuracy(const std::vector<Vec>& scores, const std::vector<LabelVector>& labels);

// Accuracy of posterior predictions against the hidden clean labels of the
// noisy training set: argmax match in multiclass mode, mAP of the scores in
// multilabel mode.
double recovery_accuracy(const std::vector<Vec>& q_scores,
                         const std::vector<LabelVector>& hidden_clean, Mode mode);

// Non-interpolated mean average precision over classes, in percent. Ties are
// broken by instance index; classes with no positive instance are skipped
// (with a note to stderr) and excluded from the mean.
double mean_average_precision(const std::vector<Vec>& scores,
                              const std::vector<LabelVector>& labels,
                              std::vector<double>* per_class = nullptr);

// -log((T' p)[noisy]): cross-entropy against the noise-mixed prediction.
double forward_corrected_loss(const Vec& model_probs, int noisy_label, const Mat& T);

// (T^-1 l)[noisy] where l[k] = -log p_k. Throws NumericError on singular T.
double backward_corrected_loss(const Vec& per_class_ce, int noisy_label, const Mat& T);

// Inverse of T for the backward correction; NumericError when singular.
Mat backward_inverse(const Mat& T);

}  // namespace crfnoise
