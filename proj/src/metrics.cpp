#include "octpredict/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace oct {

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size()) throw std::invalid_argument("auroc: scores/labels length mismatch");
    long n_pos = 0, n_neg = 0;
    for (int y : labels) {
        if (y != 0 && y != 1) throw std::invalid_argument("auroc: labels must be 0 or 1");
        (y == 1 ? n_pos : n_neg)++;
    }
    if (n_pos == 0 || n_neg == 0) throw SingleClassError("auroc: needs both classes present");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

    // midranks over tie groups; sum positive ranks gives the U statistic
    double rank_sum_pos = 0;
    std::size_t i = 0;
    while (i < order.size()) {
        std::size_t j = i;
        while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
        for (std::size_t k = i; k < j; ++k)
            if (labels[order[k]] == 1) rank_sum_pos += midrank;
        i = j;
    }
    const double u = rank_sum_pos - 0.5 * static_cast<double>(n_pos) * (n_pos + 1);
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

ThresholdMetrics threshold_metrics(const std::vector<double>& scores, const std::vector<int>& labels,
                                   double threshold) {
    if (scores.size() != labels.size()) throw std::invalid_argument("threshold_metrics: scores/labels length mismatch");
    ThresholdMetrics m;
    for (std::size_t i = 0; i < scores.size(); ++i) {
        if (labels[i] != 0 && labels[i] != 1) throw std::invalid_argument("threshold_metrics: labels must be 0 or 1");
        const bool pred = scores[i] >= threshold;
        if (labels[i] == 1)
            pred ? ++m.tp : ++m.fn;
        else
            pred ? ++m.fp : ++m.tn;
    }
    if (m.tp + m.fn == 0 || m.tn + m.fp == 0) throw SingleClassError("threshold_metrics: needs both classes present");
    const double precision = (m.tp + m.fp) > 0 ? static_cast<double>(m.tp) / (m.tp + m.fp) : 0.0;
    m.recall = static_cast<double>(m.tp) / (m.tp + m.fn);
    m.specificity = static_cast<double>(m.tn) / (m.tn + m.fp);
    m.f1 = (precision + m.recall) > 0 ? 2.0 * precision * m.recall / (precision + m.recall) : 0.0;
    return m;
}

MetricSet compute_metric_set(const std::vector<double>& scores, const std::vector<int>& labels, double threshold) {
    MetricSet s;
    const ThresholdMetrics t = threshold_metrics(scores, labels, threshold);
    s.f1 = t.f1;
    s.recall = t.recall;
    s.specificity = t.specificity;
    s.auroc = auroc(scores, labels);
    return s;
}

namespace {

// Regularized incomplete beta I_x(a, b), continued fraction (Lentz).
double betacf(double a, double b, double x) {
    constexpr int kMaxIter = 300;
    constexpr double kEps = 3e-15;
    constexpr double kFpMin = 1e-300;
    const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
    double c = 1.0;
    double d = 1.0 - qab * x / qap;
    if (std::abs(d) < kFpMin) d = kFpMin;
    d = 1.0 / d;
    double h = d;
    for (int m = 1; m <= kMaxIter; ++m) {
        const int m2 = 2 * m;
        double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        h *= d * c;
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if (std::abs(d) < kFpMin) d = kFpMin;
        c = 1.0 + aa / c;
        if (std::abs(c) < kFpMin) c = kFpMin;
        d = 1.0 / d;
        const double del = d * c;
        h *= del;
        if (std::abs(del - 1.0) < kEps) break;
    }
    return h;
}

double ibeta(double a, double b, double x) {
    if (x <= 0.0) return 0.0;
    if (x >= 1.0) return 1.0;
    const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
    const double front = std::exp(ln_front);
    if (x < (a + 1.0) / (a + b + 2.0)) return front * betacf(a, b, x) / a;
    return 1.0 - front * betacf(b, a, 1.0 - x) / b;
}

}  // namespace

double student_t_quantile(double p, double dof) {
    if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("student_t_quantile: p must be in (0,1)");
    if (dof <= 0.0) throw std::invalid_argument("student_t_quantile: dof must be positive");
    if (p == 0.5) return 0.0;
    const bool upper = p > 0.5;
    const double tail = upper ? 2.0 * (1.0 - p) : 2.0 * p;  // two-sided tail mass

    // bisection on x = dof / (dof + t^2): P(|T| > t) = I_x(dof/2, 1/2)
    double lo = 0.0, hi = 1.0;
    for (int it = 0; it < 200; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (ibeta(dof / 2.0, 0.5, mid) < tail)
            lo = mid;
        else
            hi = mid;
    }
    const double x = 0.5 * (lo + hi);
    const double t = std::sqrt(dof * (1.0 - x) / x);
    return upper ? t : -t;
}

AggregateStat aggregate_runs(const std::vector<double>& values) {
    if (values.size() < 2) throw std::invalid_argument("aggregate_runs: needs at least 2 runs");
    AggregateStat s;
    s.n_runs = static_cast<int>(values.size());
    const double n = static_cast<double>(values.size());
    s.mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
    const auto [lo, hi] = std::minmax_element(values.begin(), values.end());
    // corrected two-pass sum of squares; a constant sequence has zero
    // variance exactly, with no dependence on how the mean rounded
    double ss = 0, comp = 0;
    for (double v : values) {
        ss += (v - s.mean) * (v - s.mean);
        comp += v - s.mean;
    }
    const double sd =
        *lo == *hi ? 0.0 : std::sqrt(std::max(0.0, ss - comp * comp / n) / (n - 1.0));
    s.ci_half_width = student_t_quantile(0.975, n - 1.0) * sd / std::sqrt(n);
    s.max = *std::max_element(values.begin(), values.end());
    return s;
}

}  // namespace oct
