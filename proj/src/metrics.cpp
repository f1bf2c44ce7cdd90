#include "crfnoise/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <iostream>

namespace crfnoise {

nlohmann::json MetricReport::to_json() const {
    return {{"prediction_accuracy", prediction_accuracy},
            {"recovery_accuracy", recovery_accuracy},
            {"map", map},
            {"per_class", per_class}};
}

double accuracy(const std::vector<Vec>& scores, const std::vector<LabelVector>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("accuracy: size mismatch or empty");
    size_t hits = 0;
    for (size_t i = 0; i < scores.size(); ++i) {
        int pred = 0;
        scores[i].maxCoeff(&pred);
        hits += pred == labels[i].argmax();
    }
    return 100.0 * static_cast<double>(hits) / static_cast<double>(scores.size());
}

double recovery_accuracy(const std::vector<Vec>& q_scores,
                         const std::vector<LabelVector>& hidden_clean, Mode mode) {
    if (q_scores.size() != hidden_clean.size() || q_scores.empty())
        throw std::invalid_argument("recovery_accuracy: missing predictions or labels");
    if (mode == Mode::multiclass) return accuracy(q_scores, hidden_clean);
    return mean_average_precision(q_scores, hidden_clean);
}

double mean_average_precision(const std::vector<Vec>& scores,
                              const std::vector<LabelVector>& labels,
                              std::vector<double>* per_class) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("mean_average_precision: size mismatch or empty");
    int C = static_cast<int>(scores.front().size());
    size_t n = scores.size();
    if (per_class) per_class->assign(C, 0.0);

    double total = 0.0;
    int counted = 0;
    std::vector<size_t> order(n);
    for (int c = 0; c < C; ++c) {
        size_t positives = 0;
        for (size_t i = 0; i < n; ++i) positives += labels[i].bits[c] == 1.0;
        if (positives == 0) {
            std::cerr << "mean_average_precision: class " << c
                      << " has no positives, excluded\n";
            if (per_class) (*per_class)[c] = std::nan("");
            continue;
        }
        for (size_t i = 0; i < n; ++i) order[i] = i;
        std::stable_sort(order.begin(), order.end(), [&](size_t lhs, size_t rhs) {
            if (scores[lhs][c] != scores[rhs][c]) return scores[lhs][c] > scores[rhs][c];
            return lhs < rhs;
        });
        double ap = 0.0;
        size_t tp = 0;
        for (size_t rank = 0; rank < n; ++rank) {
            if (labels[order[rank]].bits[c] == 1.0) {
                ++tp;
                ap += static_cast<double>(tp) / static_cast<double>(rank + 1);
            }
        }
        ap /= static_cast<double>(positives);
        if (per_class) (*per_class)[c] = 100.0 * ap;
        total += ap;
        ++counted;
    }
    if (counted == 0) throw std::invalid_argument("mean_average_precision: no scorable classes");
    return 100.0 * total / counted;
}

double forward_corrected_loss(const Vec& model_probs, int noisy_label, const Mat& T) {
    if (model_probs.size() != T.rows() || T.rows() != T.cols())
        throw DimError("forward_corrected_loss: dims");
    double mixed = T.col(noisy_label).dot(model_probs);  // (T' p)[noisy]
    if (mixed < 1e-12) {
        std::cerr << "forward_corrected_loss: mixed probability clamped at 1e-12\n";
        mixed = 1e-12;
    }
    return -std::log(mixed);
}

Mat backward_inverse(const Mat& T) {
    Eigen::PartialPivLU<Mat> lu(T);
    double det = lu.determinant();
    if (!std::isfinite(det) || std::abs(det) < 1e-12)
        throw NumericError("backward correction: transition matrix is singular");
    return lu.inverse();
}

double backward_corrected_loss(const Vec& per_class_ce, int noisy_label, const Mat& T) {
    if (per_class_ce.size() != T.rows()) throw DimError("backward_corrected_loss: dims");
    Mat inv = backward_inverse(T);
    return inv.row(noisy_label).dot(per_class_ce);
}

}  // namespace crfnoise
