// SPDX-License-Identifier: Apache-2.0
#include "emubound/stats.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>

#include "emubound/error.hpp"

namespace emubound {

double chi_squared_quantile(int df, double p) {
    if (df < 1) throw DomainError("chi_squared_quantile: df must be >= 1");
    if (!(p > 0.0 && p < 1.0)) throw DomainError("chi_squared_quantile: p must be in (0, 1)");
    boost::math::chi_squared dist(static_cast<double>(df));
    return boost::math::quantile(dist, p);
}

double chi_squared_cdf(int df, double x) {
    if (df < 1) throw DomainError("chi_squared_cdf: df must be >= 1");
    if (x <= 0.0) return 0.0;
    boost::math::chi_squared dist(static_cast<double>(df));
    return boost::math::cdf(dist, x);
}

double normal_cdf(double x) {
    static const boost::math::normal dist(0.0, 1.0);
    return boost::math::cdf(dist, x);
}

double normal_quantile(double p) {
    if (!(p > 0.0 && p < 1.0)) throw DomainError("normal_quantile: p must be in (0, 1)");
    static const boost::math::normal dist(0.0, 1.0);
    return boost::math::quantile(dist, p);
}

double half_normal_quantile(double p) {
    if (!(p >= 0.0 && p < 1.0)) throw DomainError("half_normal_quantile: p must be in [0, 1)");
    if (p == 0.0) return 0.0;
    return normal_quantile((1.0 + p) / 2.0);
}

double quantile_type1_sorted(const std::vector<double>& sorted, double p) {
    if (sorted.empty()) throw DomainError("quantile of empty sample");
    if (!(p >= 0.0 && p <= 1.0)) throw DomainError("quantile level must be in [0, 1]");
    const auto m = sorted.size();
    if (p <= 0.0) return sorted.front();
    auto rank = static_cast<std::size_t>(std::ceil(p * static_cast<double>(m)));
    if (rank < 1) rank = 1;
    if (rank > m) rank = m;
    return sorted[rank - 1];
}

double mean(const std::vector<double>& xs) {
    if (xs.empty()) return 0.0;
    KahanSum s;
    for (double x : xs) s.add(x);
    return s.value() / static_cast<double>(xs.size());
}

double sample_variance(const std::vector<double>& xs) {
    const auto n = xs.size();
    if (n < 2) return 0.0;
    const double m = mean(xs);
    KahanSum s;
    for (double x : xs) s.add((x - m) * (x - m));
    return s.value() / static_cast<double>(n - 1);
}

}  // namespace emubound
