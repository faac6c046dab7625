#pragma once

#include <span>

namespace hail {

// Average precision: mean of precision@k over the ranks k of the positives,
// ranking by descending score with ties kept in input order.
double auc_pr(std::span<const double> scores, std::span<const int> labels);

// Fraction of items with (score >= threshold) == label.
double accuracy(std::span<const double> scores, std::span<const int> labels, double threshold = 0.5);

}  // namespace hail
