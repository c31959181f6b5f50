// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

namespace emubound {

double chi_squared_quantile(int df, double p);
double chi_squared_cdf(int df, double x);
double normal_cdf(double x);
double normal_quantile(double p);

// Quantile of |Z|, Z standard normal: solves 2*Phi(t) - 1 = p.
double half_normal_quantile(double p);

// Lower empirical quantile (type 1) of an ascending-sorted sample:
// the smallest element with at least a fraction p of the sample at or below it.
double quantile_type1_sorted(const std::vector<double>& sorted, double p);

// Kahan-Babuska compensated accumulator. Cross-cell statistics are summed with
// this in the fixed grid order so results do not depend on worker count.
class KahanSum {
public:
    void add(double x) {
        double t = sum_ + x;
        if (std::abs(sum_) >= std::abs(x)) {
            comp_ += (sum_ - t) + x;
        } else {
            comp_ += (x - t) + sum_;
        }
        sum_ = t;
    }
    double value() const { return sum_ + comp_; }

private:
    double sum_ = 0.0;
    double comp_ = 0.0;
};

double mean(const std::vector<double>& xs);
// Unbiased (n-1) sample variance; 0 for n < 2.
double sample_variance(const std::vector<double>& xs);

}  // namespace emubound
