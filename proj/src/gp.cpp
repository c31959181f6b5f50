// SPDX-License-Identifier: Apache-2.0
#include "emubound/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "emubound/error.hpp"
#include "emubound/optim.hpp"
#include "emubound/rng.hpp"
#include "emubound/stats.hpp"

namespace emubound {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

double scaled_distance(const double* a, const double* b, const std::vector<double>& ell) {
    double s = 0.0;
    for (std::size_t i = 0; i < ell.size(); ++i) {
        double d = (a[i] - b[i]) / ell[i];
        s += d * d;
    }
    return std::sqrt(s);
}

void check_hyper(const Hyperparameters& hyper) {
    if (!(hyper.amplitude2 > 0.0)) throw DomainError("kernel: amplitude2 must be strictly positive");
    for (double l : hyper.length_scales)
        if (!(l > 0.0)) throw DomainError("kernel: length scales must be strictly positive");
    if (hyper.nugget < 0.0) throw DomainError("kernel: nugget must be nonnegative");
}

struct GramParts {
    Eigen::MatrixXd k_f;   // amplitude2 * exp(-d), no nugget
    Eigen::MatrixXd dist;  // scaled distances d_ij
};

GramParts build_gram(const Hyperparameters& hyper, const std::vector<ParameterVector>& inputs) {
    const auto n = static_cast<Eigen::Index>(inputs.size());
    GramParts parts;
    parts.k_f.resize(n, n);
    parts.dist.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        parts.dist(i, i) = 0.0;
        parts.k_f(i, i) = hyper.amplitude2;
        for (Eigen::Index j = i + 1; j < n; ++j) {
            double d = scaled_distance(inputs[static_cast<std::size_t>(i)].values.data(),
                                       inputs[static_cast<std::size_t>(j)].values.data(),
                                       hyper.length_scales);
            double k = hyper.amplitude2 * std::exp(-d);
            parts.dist(i, j) = parts.dist(j, i) = d;
            parts.k_f(i, j) = parts.k_f(j, i) = k;
        }
    }
    return parts;
}

}  // namespace

double kernel(const ParameterVector& u, const ParameterVector& v, const Hyperparameters& hyper) {
    if (u.size() != v.size() || u.size() != hyper.length_scales.size())
        throw DomainError("kernel: dimensions disagree");
    check_hyper(hyper);
    return hyper.amplitude2 * std::exp(-scaled_distance(u.values.data(), v.values.data(), hyper.length_scales));
}

LogMarginalLikelihood log_marginal_likelihood(const Hyperparameters& hyper,
                                              const std::vector<ParameterVector>& inputs,
                                              const std::vector<double>& outputs) {
    if (inputs.size() != outputs.size() || inputs.empty())
        throw DomainError("log_marginal_likelihood: inputs/outputs sizes disagree");
    check_hyper(hyper);
    const auto n = static_cast<Eigen::Index>(inputs.size());
    const auto p = hyper.length_scales.size();

    auto parts = build_gram(hyper, inputs);
    Eigen::MatrixXd gram = parts.k_f;
    gram.diagonal().array() += hyper.nugget;

    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite("log_marginal_likelihood: Gram matrix factorization failed");

    Eigen::VectorXd resid(n);
    for (Eigen::Index i = 0; i < n; ++i) resid(i) = outputs[static_cast<std::size_t>(i)] - hyper.beta0;

    Eigen::VectorXd alpha = llt.solve(resid);
    double log_det = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) log_det += std::log(llt.matrixL()(i, i));
    log_det *= 2.0;

    LogMarginalLikelihood out;
    out.value = -0.5 * resid.dot(alpha) - 0.5 * log_det - 0.5 * static_cast<double>(n) * kLog2Pi;

    // W = K^{-1} - alpha alpha^T; dL/dtheta = -0.5 * sum(W .* dK/dtheta).
    Eigen::MatrixXd kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
    Eigen::MatrixXd w = kinv - alpha * alpha.transpose();

    out.gradient.assign(p + 3, 0.0);
    out.gradient[0] = alpha.sum();  // d/d(beta0)
    out.gradient[1] = -0.5 * (w.array() * parts.k_f.array()).sum();  // d/d(log amplitude2)

    // d k_ij / d log ell_m = k_ij * delta_m^2 / (ell_m^2 * d_ij); zero at d_ij = 0
    // (the kernel's non-differentiability at coincident points is resolved by
    // taking the diagonal distance contribution as exactly zero).
    for (std::size_t m = 0; m < p; ++m) {
        double ell2 = hyper.length_scales[m] * hyper.length_scales[m];
        double acc = 0.0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i + 1; j < n; ++j) {
                double d = parts.dist(i, j);
                if (d <= 0.0) continue;
                double du = inputs[static_cast<std::size_t>(i)].values[m] -
                            inputs[static_cast<std::size_t>(j)].values[m];
                double dk = parts.k_f(i, j) * (du * du) / (ell2 * d);
                acc += 2.0 * w(i, j) * dk;  // symmetric off-diagonal pair
            }
        }
        out.gradient[2 + m] = -0.5 * acc;
    }
    out.gradient[p + 2] = -0.5 * w.trace() * hyper.nugget;  // d/d(log nugget)
    return out;
}

CellEmulator::CellEmulator(Hyperparameters hyper, std::vector<ParameterVector> inputs,
                           std::vector<double> outputs)
    : hyper_(std::move(hyper)), inputs_(std::move(inputs)), outputs_(std::move(outputs)) {
    check_hyper(hyper_);
    const auto n = static_cast<Eigen::Index>(inputs_.size());
    if (n < 2) throw DomainError("CellEmulator: need at least 2 training points");
    auto parts = build_gram(hyper_, inputs_);
    Eigen::MatrixXd gram = parts.k_f;
    gram.diagonal().array() += hyper_.nugget;
    Eigen::LLT<Eigen::MatrixXd> llt(gram);
    if (llt.info() != Eigen::Success)
        throw NotPositiveDefinite("CellEmulator: Gram matrix factorization failed");
    chol_lower_ = llt.matrixL();
    Eigen::VectorXd resid(n);
    for (Eigen::Index i = 0; i < n; ++i) resid(i) = outputs_[static_cast<std::size_t>(i)] - hyper_.beta0;
    weights_ = llt.solve(resid);
}

std::pair<double, double> CellEmulator::predict(const ParameterVector& u) const {
    const auto n = static_cast<Eigen::Index>(inputs_.size());
    Eigen::VectorXd k_star(n);
    for (Eigen::Index i = 0; i < n; ++i)
        k_star(i) = hyper_.amplitude2 *
                    std::exp(-scaled_distance(u.values.data(), inputs_[static_cast<std::size_t>(i)].values.data(),
                                              hyper_.length_scales));
    double mean = hyper_.beta0 + k_star.dot(weights_);
    Eigen::VectorXd v = chol_lower_.triangularView<Eigen::Lower>().solve(k_star);
    double var = hyper_.amplitude2 + hyper_.nugget - v.squaredNorm();
    if (var < 0.0) var = 0.0;
    return {mean, var};
}

namespace {

struct FitBounds {
    std::vector<double> lower, upper;  // theta = (beta0, log a2, log ell_1..p, log nugget)
};

FitBounds make_bounds(double y_min, double y_max, double y_var, const std::vector<double>& ranges,
                      double nugget_floor) {
    const std::size_t p = ranges.size();
    FitBounds b;
    b.lower.resize(p + 3);
    b.upper.resize(p + 3);
    double span = y_max - y_min;
    double eps = 1e-6 * std::max(1.0, std::max(std::abs(y_min), std::abs(y_max)));
    b.lower[0] = y_min - 3.0 * span - eps;
    b.upper[0] = y_max + 3.0 * span + eps;
    double v = y_var > 0.0 ? y_var : 1e-12;
    b.lower[1] = std::log(1e-8 * v);
    b.upper[1] = std::log(1e4 * v);
    for (std::size_t i = 0; i < p; ++i) {
        b.lower[2 + i] = std::log(1e-2 * ranges[i]);
        b.upper[2 + i] = std::log(1e2 * ranges[i]);
    }
    b.lower[p + 2] = std::log(nugget_floor);
    b.upper[p + 2] = std::log(std::max(10.0 * v, 100.0 * nugget_floor));
    return b;
}

Hyperparameters unpack(const std::vector<double>& theta, std::size_t p) {
    Hyperparameters h;
    h.beta0 = theta[0];
    h.amplitude2 = std::exp(theta[1]);
    h.length_scales.resize(p);
    for (std::size_t i = 0; i < p; ++i) h.length_scales[i] = std::exp(theta[2 + i]);
    h.nugget = std::exp(theta[p + 2]);
    return h;
}

}  // namespace

CellEmulator fit(const std::vector<ParameterVector>& inputs, const std::vector<double>& outputs,
                 const GpFitConfig& config) {
    const std::size_t n = inputs.size();
    if (n < 2) throw DomainError("fit: need at least 2 training points");
    if (outputs.size() != n) throw DomainError("fit: inputs/outputs sizes disagree");
    for (double y : outputs)
        if (!std::isfinite(y)) throw DomainError("fit: outputs must be finite");
    const std::size_t p = inputs[0].size();

    double y_min = *std::min_element(outputs.begin(), outputs.end());
    double y_max = *std::max_element(outputs.begin(), outputs.end());
    double y_mean = mean(outputs);
    double y_var = 0.0;
    for (double y : outputs) y_var += (y - y_mean) * (y - y_mean);
    y_var /= static_cast<double>(n);
    double v_scale = y_var > 0.0 ? y_var : 1e-12;

    std::vector<double> ranges = config.dim_ranges;
    if (ranges.empty()) {
        ranges.resize(p);
        for (std::size_t i = 0; i < p; ++i) {
            double lo = inputs[0].values[i], hi = inputs[0].values[i];
            for (const auto& u : inputs) {
                lo = std::min(lo, u.values[i]);
                hi = std::max(hi, u.values[i]);
            }
            ranges[i] = hi > lo ? hi - lo : 1.0;
        }
    } else if (ranges.size() != p) {
        throw DomainError("fit: dim_ranges size disagrees with input dimension");
    }

    auto bounds = make_bounds(y_min, y_max, y_var, ranges, config.nugget_floor);

    auto objective = [&](const std::vector<double>& theta, std::vector<double>& grad) -> double {
        Hyperparameters h = unpack(theta, p);
        try {
            auto lml = log_marginal_likelihood(h, inputs, outputs);
            grad = lml.gradient;
            return lml.value;
        } catch (const NotPositiveDefinite&) {
            std::fill(grad.begin(), grad.end(), 0.0);
            return -std::numeric_limits<double>::infinity();
        }
    };

    LbfgsConfig opt_config;
    opt_config.max_iter = config.max_iter;
    opt_config.gtol = config.gtol;
    opt_config.ftol = config.ftol;

    bool have_best = false;
    double best_value = -std::numeric_limits<double>::infinity();
    std::vector<double> best_theta;
    std::string last_failure = "no restarts were run";

    for (int r = 0; r < std::max(1, config.restarts); ++r) {
        Rng rng(derive_seed(config.seed, static_cast<std::uint64_t>(r)));
        std::vector<double> theta(p + 3);
        if (r == 0) {
            theta[0] = y_mean;
            theta[1] = std::log(v_scale);
            for (std::size_t i = 0; i < p; ++i) theta[2 + i] = std::log(ranges[i]);
            theta[p + 2] = std::log(std::max(1e-6 * v_scale, config.nugget_floor));
        } else {
            double y_std = std::sqrt(v_scale);
            theta[0] = y_mean + (rng.uniform() - 0.5) * 2.0 * y_std;
            theta[1] = std::log(v_scale) + rng.uniform(-3.0, 3.0);
            for (std::size_t i = 0; i < p; ++i) theta[2 + i] = std::log(ranges[i]) + rng.uniform(-2.5, 2.5);
            theta[p + 2] = std::log(std::max(1e-6 * v_scale, config.nugget_floor)) + rng.uniform(-2.0, 4.0);
        }
        for (std::size_t i = 0; i < theta.size(); ++i)
            theta[i] = std::clamp(theta[i], bounds.lower[i], bounds.upper[i]);

        auto result = lbfgsb_maximize(objective, theta, bounds.lower, bounds.upper, opt_config);
        if (!std::isfinite(result.value)) {
            last_failure = "restart " + std::to_string(r) + ": factorization failed at every evaluated point";
            continue;
        }
        if (!have_best || result.value > best_value) {
            have_best = true;
            best_value = result.value;
            best_theta = result.x;
        }
    }

    if (!have_best) throw FitError("fit: all restarts failed (" + last_failure + ")");

    CellEmulator emu(unpack(best_theta, p), inputs, outputs);
    emu.set_fit_value(best_value);
    return emu;
}

}  // namespace emubound
