#include "fegap/quasirandom.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <set>
#include <stdexcept>
#include <string>

namespace fegap {

double radical_inverse(std::uint64_t index, unsigned base) {
    if (index < 1 || base < 2) {
        throw std::invalid_argument("radical_inverse needs index >= 1 and base >= 2");
    }
    // Reverse the digits into an integer numerator over base^m, then divide
    // once. 128-bit accumulation keeps base^m from overflowing.
    unsigned __int128 numerator = 0;
    unsigned __int128 denominator = 1;
    while (index > 0) {
        numerator = numerator * base + index % base;
        denominator *= base;
        index /= base;
    }
    const double u = static_cast<double>(numerator) / static_cast<double>(denominator);
    return std::min(u, std::nextafter(1.0, 0.0));
}

bool is_prime(unsigned n) {
    if (n < 2) return false;
    for (unsigned d = 2; d * d <= n; ++d) {
        if (n % d == 0) return false;
    }
    return true;
}

std::vector<unsigned> first_primes(std::size_t count) {
    std::vector<unsigned> primes;
    for (unsigned n = 2; primes.size() < count; ++n) {
        if (is_prime(n)) primes.push_back(n);
    }
    return primes;
}

HaltonConfig HaltonConfig::with_dimensions(std::size_t dims, std::size_t draws, std::size_t burn) {
    return HaltonConfig{first_primes(dims), burn, draws};
}

void HaltonConfig::validate() const {
    if (draws_per_obs < 1) {
        throw std::invalid_argument("draws per observation must be at least 1");
    }
    std::set<unsigned> seen;
    for (unsigned b : bases) {
        if (!is_prime(b)) throw std::invalid_argument("Halton base " + std::to_string(b) + " is not prime");
        if (!seen.insert(b).second) throw std::invalid_argument("Halton base " + std::to_string(b) + " repeated");
    }
}

Eigen::MatrixXd halton_block(const HaltonConfig& config, std::size_t obs_index) {
    const auto R = static_cast<Eigen::Index>(config.draws_per_obs);
    const auto D = static_cast<Eigen::Index>(config.bases.size());
    Eigen::MatrixXd u(R, D);
    const std::uint64_t first = config.burn + obs_index * config.draws_per_obs + 1;
    for (Eigen::Index r = 0; r < R; ++r) {
        for (Eigen::Index d = 0; d < D; ++d) {
            u(r, d) = radical_inverse(first + static_cast<std::uint64_t>(r), config.bases[d]);
        }
    }
    return u;
}

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

namespace {

double acklam_lower(double p) {
    static constexpr double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                                   1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
    static constexpr double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                                   6.680131188771972e+01,  -1.328068155288572e+01};
    static constexpr double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                                   -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
    static constexpr double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                                   3.754408661907416e+00};
    constexpr double p_low = 0.02425;

    if (p < p_low) {
        const double q = std::sqrt(-2.0 * std::log(p));
        return (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
               ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1.0);
    }
    const double q = p - 0.5;
    const double r = q * q;
    return (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
           (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1.0);
}

}  // namespace

double inverse_normal_cdf(double u) {
    if (!(u > 0.0 && u < 1.0)) {
        throw std::domain_error("inverse_normal_cdf: argument must lie in (0, 1)");
    }
    if (u == 0.5) return 0.0;
    // Work in the lower half where 1 - u is exact.
    if (u > 0.5) return -inverse_normal_cdf(1.0 - u);

    double x = acklam_lower(u);
    const double e = normal_cdf(x) - u;
    const double t = e * std::sqrt(2.0 * std::numbers::pi) * std::exp(0.5 * x * x);
    x -= t / (1.0 + 0.5 * x * t);
    return x;
}

DrawStore::DrawStore(std::size_t n_obs, const HaltonConfig& config, std::size_t memory_cap) : config_(config) {
    config.validate();
    if (n_obs < 1) throw std::invalid_argument("draw store needs at least one observation");
    if (config.bases.empty()) throw std::invalid_argument("draw store needs at least one dimension");
    n_ = n_obs;
    r_ = config.draws_per_obs;
    d_ = config.bases.size();
    const long double bytes = static_cast<long double>(n_) * r_ * d_ * sizeof(double);
    if (bytes > static_cast<long double>(memory_cap)) {
        throw std::length_error("draw store of " + std::to_string(static_cast<unsigned long long>(bytes)) +
                                " bytes exceeds the memory cap of " + std::to_string(memory_cap) + " bytes");
    }
    z_.resize(n_ * r_ * d_);
    for (std::size_t i = 0; i < n_; ++i) {
        const std::uint64_t first = config.burn + i * r_ + 1;
        for (std::size_t r = 0; r < r_; ++r) {
            for (std::size_t d = 0; d < d_; ++d) {
                z_[(i * r_ + r) * d_ + d] = inverse_normal_cdf(radical_inverse(first + r, config.bases[d]));
            }
        }
    }
}

}  // namespace fegap
