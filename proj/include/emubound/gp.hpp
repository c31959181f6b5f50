// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "emubound/data.hpp"

namespace emubound {

// Constant-mean GP with the anisotropic exponential covariance
//   k(u, u') = amplitude2 * exp(-sqrt(sum_i (u_i - u'_i)^2 / length_scales_i^2)).
// The nugget is a trainable jitter on the Gram diagonal; the exponential kernel
// on high-dimensional inputs is prone to ill-conditioned Gram matrices without it.
struct Hyperparameters {
    double beta0 = 0.0;
    double amplitude2 = 1.0;
    std::vector<double> length_scales;
    double nugget = 0.0;
};

double kernel(const ParameterVector& u, const ParameterVector& v, const Hyperparameters& hyper);

struct LogMarginalLikelihood {
    double value = 0.0;
    // d/d(beta0), d/d(log amplitude2), d/d(log ell_1..p), d/d(log nugget)
    std::vector<double> gradient;
};

// Gaussian log marginal likelihood of (outputs - beta0) under the Gram matrix,
// with an exact gradient in the parameterization above. Throws
// NotPositiveDefinite when the factorization fails (raise the nugget).
LogMarginalLikelihood log_marginal_likelihood(const Hyperparameters& hyper,
                                              const std::vector<ParameterVector>& inputs,
                                              const std::vector<double>& outputs);

struct GpFitConfig {
    int restarts = 5;
    std::uint64_t seed = 0;
    int max_iter = 120;
    double gtol = 1e-5;
    double ftol = 1e-11;
    double nugget_floor = 1e-10;
    // Parameter ranges used for the length-scale bounds; derived from the
    // training inputs when empty (the fleet passes the ParameterSpace ranges).
    std::vector<double> dim_ranges;
};

class CellEmulator {
public:
    CellEmulator(Hyperparameters hyper, std::vector<ParameterVector> inputs, std::vector<double> outputs);

    // Standard GP conditional; variance is clipped at zero from below.
    std::pair<double, double> predict(const ParameterVector& u) const;

    const Hyperparameters& hyper() const { return hyper_; }
    const std::vector<ParameterVector>& train_inputs() const { return inputs_; }
    const std::vector<double>& train_outputs() const { return outputs_; }
    double fit_value() const { return fit_value_; }
    void set_fit_value(double v) { fit_value_ = v; }

private:
    Hyperparameters hyper_;
    std::vector<ParameterVector> inputs_;
    std::vector<double> outputs_;
    Eigen::MatrixXd chol_lower_;   // L with L L^T = K
    Eigen::VectorXd weights_;      // K^{-1} (y - beta0)
    double fit_value_ = 0.0;       // best log marginal likelihood reached by fit()
};

// Maximum-likelihood fit: bounded quasi-Newton ascent in log-space over
// (amplitude2, length scales, nugget) with beta0 optimized jointly, restarted
// from `config.restarts` randomized initial points; the best restart wins.
CellEmulator fit(const std::vector<ParameterVector>& inputs, const std::vector<double>& outputs,
                 const GpFitConfig& config);

}  // namespace emubound
