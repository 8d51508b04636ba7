#pragma once

#include <map>
#include <string>
#include <vector>

namespace iace {

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels);

struct BinaryCounts {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};
BinaryCounts binary_counts(const std::vector<int>& predictions, const std::vector<int>& labels);

// Positive class is 1. Zero denominators yield 0 by convention.
double precision(const BinaryCounts& c);
double recall(const BinaryCounts& c);
double f1_score(const BinaryCounts& c);

// Returns 0 when either side has zero variance.
double pearson(const std::vector<double>& a, const std::vector<double>& b);
// Average ranks for ties, then Pearson on the ranks.
double spearman(const std::vector<double>& a, const std::vector<double>& b);

// Task-appropriate metric map: accuracy everywhere; binary tasks add
// precision/recall/f1/acc_f1_avg.
std::map<std::string, double> classification_metrics(const std::vector<int>& predictions,
                                                     const std::vector<int>& labels,
                                                     std::size_t num_classes);
std::map<std::string, double> regression_metrics(const std::vector<double>& predictions,
                                                 const std::vector<double>& labels);

}  // namespace iace
