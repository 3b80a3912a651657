#pragma once

#include <stdexcept>
#include <vector>

namespace oct {

// Raised when a metric needs both classes and only one is present.
struct SingleClassError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Per-run classification metrics, stored as fractions in [0, 1].
struct MetricSet {
    double f1 = 0;
    double auroc = 0;
    double recall = 0;
    double specificity = 0;
};

// Mann-Whitney AUROC: fraction of (positive, negative) pairs ranked
// correctly, ties counted 0.5. Computed via midranks in O(n log n).
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

struct ThresholdMetrics {
    double f1 = 0, recall = 0, specificity = 0;
    long tp = 0, fp = 0, tn = 0, fn = 0;
};

// Positive prediction iff score >= threshold. F1 is defined as 0 when
// precision + recall is 0.
ThresholdMetrics threshold_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                                   double threshold = 0.5);

MetricSet compute_metric_set(const std::vector<double>& scores, const std::vector<int>& labels,
                             double threshold = 0.5);

struct AggregateStat {
    double mean = 0;
    double ci_half_width = 0;  // Student-t 95% over n runs
    double max = 0;
    int n_runs = 0;
};

AggregateStat aggregate_runs(const std::vector<double>& values);

// Inverse CDF of Student's t distribution (p in (0,1), dof > 0).
double student_t_quantile(double p, double dof);

}  // namespace oct
