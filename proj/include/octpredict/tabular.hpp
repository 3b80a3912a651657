#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace oct {

// Per-feature standardization statistics, population (divide-by-n) std.
struct WhiteningParams {
    std::vector<double> mean;
    std::vector<double> std;
    std::vector<bool> degenerate;  // zero-std columns map to constant 0
};

WhiteningParams fit_whitening(const std::vector<std::vector<double>>& x);
std::vector<std::vector<double>> apply_whitening(const std::vector<std::vector<double>>& x,
                                                 const WhiteningParams& params);

struct RegressionModel {
    std::vector<std::string> feature_names;
    std::vector<double> weights;
    double bias = 0;
    double c = 0;  // selected regularization strength
    WhiteningParams whitening;

    std::string to_json() const;
    static RegressionModel from_json(const std::string& text);
};

struct CVConfig {
    int folds = 5;
    std::vector<double> c_grid;  // defaults to 10 log-spaced values in [1e-4, 1e4]
    std::uint64_t seed = 0;

    static CVConfig defaults(std::uint64_t seed = 0);
    void validate() const;
};

// Minimizes sum-of-BCE plus (1/(2C)) * ||w||^2 with unpenalized bias, by
// damped Newton iteration, to gradient norm <= 1e-8.
void fit_logistic(const std::vector<std::vector<double>>& x, const std::vector<int>& y, double c,
                  std::vector<double>& weights, double& bias);

// Stratified folds: a seeded shuffle within each class, dealt round-robin.
std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<int>& y, int folds, std::uint64_t seed);

// Mean CV accuracy for one C value over the given folds.
double cross_validate(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                      const std::vector<std::vector<std::size_t>>& folds, double c);

// Picks the best-accuracy C (ties go to the larger C), then refits on all
// rows. feature_names is stored for reporting; whitening is carried along so
// the persisted model is self-contained.
RegressionModel fit_logistic_cv(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                const CVConfig& cv, const std::vector<std::string>& feature_names,
                                const WhiteningParams& whitening = {});

double predict_proba(const RegressionModel& model, const std::vector<double>& x);

// 100 * |w_i| / sum_j |w_j|; rejects an all-zero weight vector.
std::vector<double> feature_importance(const RegressionModel& model);

// Appends the CNN probability column to each clinical row. Probabilities are
// validated to lie in [0, 1]; whitening of the extended matrix happens with
// the usual regression-set convention afterwards.
std::vector<std::vector<double>> late_fusion_features(const std::vector<std::vector<double>>& clinical,
                                                      const std::vector<double>& cnn_probability);

}  // namespace oct
