#include "metrics.hpp"

#include <algorithm>
#include <cmath>

#include "errors.hpp"

namespace iace {

static void check_sizes(std::size_t a, std::size_t b, const char* where) {
    if (a != b) throw_invalid(std::string(where) + ": size mismatch");
    if (a == 0) throw_invalid(std::string(where) + ": empty input");
}

double accuracy(const std::vector<int>& predictions, const std::vector<int>& labels) {
    check_sizes(predictions.size(), labels.size(), "accuracy");
    std::size_t correct = 0;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == labels[i]) ++correct;
    }
    return static_cast<double>(correct) / static_cast<double>(predictions.size());
}

BinaryCounts binary_counts(const std::vector<int>& predictions, const std::vector<int>& labels) {
    check_sizes(predictions.size(), labels.size(), "binary_counts");
    BinaryCounts c;
    for (std::size_t i = 0; i < predictions.size(); ++i) {
        if (predictions[i] == 1 && labels[i] == 1) ++c.tp;
        else if (predictions[i] == 1 && labels[i] == 0) ++c.fp;
        else if (predictions[i] == 0 && labels[i] == 1) ++c.fn;
        else ++c.tn;
    }
    return c;
}

double precision(const BinaryCounts& c) {
    const std::size_t denom = c.tp + c.fp;
    return denom == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double recall(const BinaryCounts& c) {
    const std::size_t denom = c.tp + c.fn;
    return denom == 0 ? 0.0 : static_cast<double>(c.tp) / static_cast<double>(denom);
}

double f1_score(const BinaryCounts& c) {
    const double p = precision(c);
    const double r = recall(c);
    return (p + r) == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
    check_sizes(a.size(), b.size(), "pearson");
    const double n = static_cast<double>(a.size());
    double ma = 0.0, mb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ma += a[i];
        mb += b[i];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i] - ma;
        const double db = b[i] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if (saa == 0.0 || sbb == 0.0) return 0.0;
    return sab / std::sqrt(saa * sbb);
}

static std::vector<double> average_ranks(const std::vector<double>& x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) order[i] = i;
    std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

double spearman(const std::vector<double>& a, const std::vector<double>& b) {
    check_sizes(a.size(), b.size(), "spearman");
    return pearson(average_ranks(a), average_ranks(b));
}

std::map<std::string, double> classification_metrics(const std::vector<int>& predictions,
                                                     const std::vector<int>& labels,
                                                     std::size_t num_classes) {
    std::map<std::string, double> m;
    m["accuracy"] = accuracy(predictions, labels);
    if (num_classes == 2) {
        const BinaryCounts c = binary_counts(predictions, labels);
        m["precision"] = precision(c);
        m["recall"] = recall(c);
        m["f1"] = f1_score(c);
        m["acc_f1_avg"] = (m["accuracy"] + m["f1"]) / 2.0;
    }
    return m;
}

std::map<std::string, double> regression_metrics(const std::vector<double>& predictions,
                                                 const std::vector<double>& labels) {
    std::map<std::string, double> m;
    m["pearson"] = pearson(predictions, labels);
    m["spearman"] = spearman(predictions, labels);
    return m;
}

}  // namespace iace
