#include "octpredict/tabular.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include <json.hpp>

#include "octpredict/rng.hpp"

namespace oct {

namespace {

void check_matrix(const std::vector<std::vector<double>>& x, const char* who) {
    if (x.empty()) throw std::invalid_argument(std::string(who) + ": empty feature matrix");
    for (const auto& row : x)
        if (row.size() != x[0].size())
            throw std::invalid_argument(std::string(who) + ": ragged feature matrix");
}

double sigmoid(double t) { return t >= 0 ? 1.0 / (1.0 + std::exp(-t)) : std::exp(t) / (1.0 + std::exp(t)); }

}  // namespace

WhiteningParams fit_whitening(const std::vector<std::vector<double>>& x) {
    check_matrix(x, "fit_whitening");
    if (x.size() < 2) throw std::invalid_argument("fit_whitening: needs at least 2 rows");
    const std::size_t d = x[0].size();
    const double n = static_cast<double>(x.size());
    WhiteningParams p;
    p.mean.assign(d, 0.0);
    p.std.assign(d, 0.0);
    p.degenerate.assign(d, false);
    for (const auto& row : x)
        for (std::size_t j = 0; j < d; ++j) p.mean[j] += row[j];
    for (std::size_t j = 0; j < d; ++j) p.mean[j] /= n;
    for (const auto& row : x)
        for (std::size_t j = 0; j < d; ++j) p.std[j] += (row[j] - p.mean[j]) * (row[j] - p.mean[j]);
    for (std::size_t j = 0; j < d; ++j) {
        p.std[j] = std::sqrt(p.std[j] / n);
        if (p.std[j] == 0.0) p.degenerate[j] = true;
    }
    return p;
}

std::vector<std::vector<double>> apply_whitening(const std::vector<std::vector<double>>& x,
                                                 const WhiteningParams& params) {
    check_matrix(x, "apply_whitening");
    const std::size_t d = params.mean.size();
    if (x[0].size() != d) throw std::invalid_argument("apply_whitening: column count does not match params");
    std::vector<std::vector<double>> out(x.size(), std::vector<double>(d));
    for (std::size_t i = 0; i < x.size(); ++i)
        for (std::size_t j = 0; j < d; ++j)
            out[i][j] = params.degenerate[j] ? 0.0 : (x[i][j] - params.mean[j]) / params.std[j];
    return out;
}

CVConfig CVConfig::defaults(std::uint64_t seed) {
    CVConfig cv;
    cv.seed = seed;
    cv.c_grid.resize(10);
    for (int i = 0; i < 10; ++i) cv.c_grid[i] = std::pow(10.0, -4.0 + 8.0 * i / 9.0);
    return cv;
}

void CVConfig::validate() const {
    if (folds < 2) throw std::invalid_argument("cv config: folds must be at least 2");
    if (c_grid.empty()) throw std::invalid_argument("cv config: empty C grid");
    for (std::size_t i = 0; i < c_grid.size(); ++i) {
        if (c_grid[i] <= 0) throw std::invalid_argument("cv config: C values must be positive");
        if (i > 0 && c_grid[i] <= c_grid[i - 1])
            throw std::invalid_argument("cv config: C grid must be strictly increasing");
    }
}

void fit_logistic(const std::vector<std::vector<double>>& x, const std::vector<int>& y, double c,
                  std::vector<double>& weights, double& bias) {
    check_matrix(x, "fit_logistic");
    if (x.size() != y.size()) throw std::invalid_argument("fit_logistic: x/y length mismatch");
    if (c <= 0) throw std::invalid_argument("fit_logistic: C must be positive");
    const std::size_t n = x.size(), d = x[0].size();
    bool has0 = false, has1 = false;
    for (int v : y) {
        if (v != 0 && v != 1) throw std::invalid_argument("fit_logistic: labels must be 0 or 1");
        (v == 1 ? has1 : has0) = true;
    }
    if (!has0 || !has1) throw std::invalid_argument("fit_logistic: both classes must be present");

    // Newton on theta = (w, b) with a ridge term on w only; the Hessian gets
    // a small Levenberg damping so near-separable data stays invertible.
    const std::size_t dim = d + 1;
    std::vector<double> theta(dim, 0.0);
    std::vector<double> grad(dim), h(dim * dim), delta(dim);

    auto objective_grad = [&](double& grad_norm) {
        std::fill(grad.begin(), grad.end(), 0.0);
        std::fill(h.begin(), h.end(), 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            double t = theta[d];
            for (std::size_t j = 0; j < d; ++j) t += theta[j] * x[i][j];
            const double p = sigmoid(t);
            const double r = p - y[i];
            const double s = p * (1.0 - p);
            for (std::size_t j = 0; j < d; ++j) grad[j] += r * x[i][j];
            grad[d] += r;
            for (std::size_t j = 0; j <= d; ++j) {
                const double xj = j < d ? x[i][j] : 1.0;
                for (std::size_t k = j; k <= d; ++k) {
                    const double xk = k < d ? x[i][k] : 1.0;
                    h[j * dim + k] += s * xj * xk;
                }
            }
        }
        for (std::size_t j = 0; j < d; ++j) {
            grad[j] += theta[j] / c;
            h[j * dim + j] += 1.0 / c;
        }
        for (std::size_t j = 0; j < dim; ++j)
            for (std::size_t k = 0; k < j; ++k) h[j * dim + k] = h[k * dim + j];
        grad_norm = 0;
        for (double g : grad) grad_norm += g * g;
        grad_norm = std::sqrt(grad_norm);
    };

    auto loss_at = [&](const std::vector<double>& th) {
        double loss = 0;
        for (std::size_t i = 0; i < n; ++i) {
            double t = th[d];
            for (std::size_t j = 0; j < d; ++j) t += th[j] * x[i][j];
            loss += std::max(t, 0.0) - t * y[i] + std::log1p(std::exp(-std::abs(t)));
        }
        for (std::size_t j = 0; j < d; ++j) loss += th[j] * th[j] / (2.0 * c);
        return loss;
    };

    constexpr int kMaxNewton = 1000;
    for (int it = 0; it < kMaxNewton; ++it) {
        double grad_norm;
        objective_grad(grad_norm);
        if (grad_norm <= 1e-8) break;

        // solve (H + lambda I) delta = grad by Cholesky, growing lambda on failure
        double lambda = 1e-10;
        std::vector<double> chol(dim * dim);
        bool solved = false;
        while (!solved && lambda < 1e6) {
            chol = h;
            for (std::size_t j = 0; j < dim; ++j) chol[j * dim + j] += lambda;
            solved = true;
            for (std::size_t j = 0; j < dim && solved; ++j) {
                for (std::size_t k = 0; k <= j; ++k) {
                    double s = chol[j * dim + k];
                    for (std::size_t m = 0; m < k; ++m) s -= chol[j * dim + m] * chol[k * dim + m];
                    if (j == k) {
                        if (s <= 0) {
                            solved = false;
                            break;
                        }
                        chol[j * dim + j] = std::sqrt(s);
                    } else {
                        chol[j * dim + k] = s / chol[k * dim + k];
                    }
                }
            }
            if (!solved) lambda *= 10;
        }
        if (!solved) throw std::runtime_error("fit_logistic: Newton system not positive definite");
        // forward/back substitution
        for (std::size_t j = 0; j < dim; ++j) {
            double s = grad[j];
            for (std::size_t k = 0; k < j; ++k) s -= chol[j * dim + k] * delta[k];
            delta[j] = s / chol[j * dim + j];
        }
        for (std::size_t jj = dim; jj-- > 0;) {
            double s = delta[jj];
            for (std::size_t k = jj + 1; k < dim; ++k) s -= chol[k * dim + jj] * delta[k];
            delta[jj] = s / chol[jj * dim + jj];
        }

        // Armijo backtracking; delta is a descent direction since the damped
        // Hessian is positive definite
        double slope = 0;
        for (std::size_t j = 0; j < dim; ++j) slope += grad[j] * delta[j];
        double step = 1.0;
        // when the predicted decrease is below the rounding noise of the loss
        // the search cannot distinguish progress; pure Newton converges there
        if (slope > 1e-10) {
            const double loss0 = loss_at(theta);
            std::vector<double> trial(dim);
            for (int ls = 0; ls < 60; ++ls) {
                for (std::size_t j = 0; j < dim; ++j) trial[j] = theta[j] - step * delta[j];
                if (loss_at(trial) <= loss0 - 1e-4 * step * slope) break;
                step *= 0.5;
            }
        }
        for (std::size_t j = 0; j < dim; ++j) theta[j] -= step * delta[j];
    }
    double final_norm;
    objective_grad(final_norm);
    if (final_norm > 1e-8) throw std::runtime_error("fit_logistic: did not converge to gradient norm 1e-8");

    weights.assign(theta.begin(), theta.begin() + d);
    bias = theta[d];
}

std::vector<std::vector<std::size_t>> stratified_folds(const std::vector<int>& y, int folds, std::uint64_t seed) {
    if (folds < 2) throw std::invalid_argument("stratified_folds: folds must be at least 2");
    std::vector<std::size_t> pos, neg;
    for (std::size_t i = 0; i < y.size(); ++i) (y[i] == 1 ? pos : neg).push_back(i);
    if (pos.empty() || neg.empty()) throw std::invalid_argument("stratified_folds: both classes must be present");

    Rng rng = Rng::substream(seed, 0xF01D);
    auto shuffle = [&](std::vector<std::size_t>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[rng.uniform_int(static_cast<std::int64_t>(i))]);
    };
    shuffle(pos);
    shuffle(neg);

    std::vector<std::vector<std::size_t>> out(folds);
    for (std::size_t i = 0; i < pos.size(); ++i) out[i % folds].push_back(pos[i]);
    for (std::size_t i = 0; i < neg.size(); ++i) out[i % folds].push_back(neg[i]);
    for (auto& f : out) std::sort(f.begin(), f.end());
    return out;
}

double cross_validate(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                      const std::vector<std::vector<std::size_t>>& folds, double c) {
    double acc_sum = 0;
    int scored = 0;
    for (std::size_t f = 0; f < folds.size(); ++f) {
        std::vector<std::vector<double>> xtr;
        std::vector<int> ytr;
        for (std::size_t g = 0; g < folds.size(); ++g) {
            if (g == f) continue;
            for (std::size_t i : folds[g]) {
                xtr.push_back(x[i]);
                ytr.push_back(y[i]);
            }
        }
        std::vector<double> w;
        double b;
        fit_logistic(xtr, ytr, c, w, b);
        if (folds[f].empty()) continue;
        int correct = 0;
        for (std::size_t i : folds[f]) {
            double t = b;
            for (std::size_t j = 0; j < w.size(); ++j) t += w[j] * x[i][j];
            if ((sigmoid(t) >= 0.5 ? 1 : 0) == y[i]) ++correct;
        }
        acc_sum += static_cast<double>(correct) / folds[f].size();
        ++scored;
    }
    if (scored == 0) throw std::invalid_argument("cross_validate: all folds empty");
    return acc_sum / scored;
}

RegressionModel fit_logistic_cv(const std::vector<std::vector<double>>& x, const std::vector<int>& y,
                                const CVConfig& cv, const std::vector<std::string>& feature_names,
                                const WhiteningParams& whitening) {
    cv.validate();
    check_matrix(x, "fit_logistic_cv");
    if (!feature_names.empty() && feature_names.size() != x[0].size())
        throw std::invalid_argument("fit_logistic_cv: feature name count does not match columns");

    const auto folds = stratified_folds(y, cv.folds, cv.seed);
    double best_acc = -1;
    double best_c = cv.c_grid.back();
    for (double c : cv.c_grid) {
        const double acc = cross_validate(x, y, folds, c);
        if (acc >= best_acc) {  // ties resolve to the larger (later) C
            best_acc = acc;
            best_c = c;
        }
    }

    RegressionModel m;
    m.feature_names = feature_names;
    m.c = best_c;
    m.whitening = whitening;
    fit_logistic(x, y, best_c, m.weights, m.bias);
    return m;
}

double predict_proba(const RegressionModel& model, const std::vector<double>& x) {
    if (x.size() != model.weights.size())
        throw std::invalid_argument("predict_proba: feature arity does not match model");
    double t = model.bias;
    for (std::size_t j = 0; j < x.size(); ++j) t += model.weights[j] * x[j];
    return sigmoid(t);
}

std::vector<double> feature_importance(const RegressionModel& model) {
    double total = 0;
    for (double w : model.weights) total += std::abs(w);
    if (total == 0) throw std::invalid_argument("feature_importance: all weights are zero");
    std::vector<double> out(model.weights.size());
    for (std::size_t j = 0; j < out.size(); ++j) out[j] = 100.0 * std::abs(model.weights[j]) / total;
    return out;
}

std::vector<std::vector<double>> late_fusion_features(const std::vector<std::vector<double>>& clinical,
                                                      const std::vector<double>& cnn_probability) {
    check_matrix(clinical, "late_fusion_features");
    if (clinical.size() != cnn_probability.size())
        throw std::invalid_argument("late_fusion_features: row count does not match probability count");
    std::vector<std::vector<double>> out = clinical;
    for (std::size_t i = 0; i < out.size(); ++i) {
        if (!(cnn_probability[i] >= 0.0 && cnn_probability[i] <= 1.0))
            throw std::invalid_argument("late_fusion_features: probability outside [0, 1]");
        out[i].push_back(cnn_probability[i]);
    }
    return out;
}

std::string RegressionModel::to_json() const {
    nlohmann::json j;
    j["feature_names"] = feature_names;
    j["weights"] = weights;
    j["bias"] = bias;
    j["C"] = c;
    j["whitening"] = {{"mean", whitening.mean}, {"std", whitening.std}, {"degenerate", whitening.degenerate}};
    return j.dump(2);
}

RegressionModel RegressionModel::from_json(const std::string& text) {
    nlohmann::json j = nlohmann::json::parse(text);
    RegressionModel m;
    m.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    m.weights = j.at("weights").get<std::vector<double>>();
    m.bias = j.at("bias").get<double>();
    m.c = j.at("C").get<double>();
    const auto& w = j.at("whitening");
    m.whitening.mean = w.at("mean").get<std::vector<double>>();
    m.whitening.std = w.at("std").get<std::vector<double>>();
    m.whitening.degenerate = w.at("degenerate").get<std::vector<bool>>();
    return m;
}

}  // namespace oct
