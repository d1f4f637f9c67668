#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace fegap {

/// Van der Corput radical inverse of `index` (>= 1) in `base` (prime >= 2).
double radical_inverse(std::uint64_t index, unsigned base);

bool is_prime(unsigned n);

/// The first `count` primes: 2, 3, 5, 7, ...
std::vector<unsigned> first_primes(std::size_t count);

struct HaltonConfig {
    std::vector<unsigned> bases;  // one per random-coefficient dimension
    std::size_t burn = 50;
    std::size_t draws_per_obs = 400;

    static HaltonConfig with_dimensions(std::size_t dims, std::size_t draws = 400, std::size_t burn = 50);

    /// Throws std::invalid_argument on non-prime or repeated bases, or R = 0.
    void validate() const;
};

/// R x D uniforms for observation `obs_index`. Observation i gets sequence
/// indices burn + i*R + 1 ... burn + (i+1)*R in every dimension.
Eigen::MatrixXd halton_block(const HaltonConfig& config, std::size_t obs_index);

/// Standard normal CDF.
double normal_cdf(double x);

/// Standard normal quantile. Acklam's rational approximation followed by one
/// Halley correction against erfc; absolute error below 1e-9 on
/// [1e-12, 1 - 1e-12]. Throws std::domain_error outside (0, 1).
double inverse_normal_cdf(double u);

/// Immutable N x R x D store of standard-normal Halton draws.
class DrawStore {
public:
    static constexpr std::size_t kDefaultMemoryCap = std::size_t{2} << 30;  // bytes

    DrawStore() = default;
    DrawStore(std::size_t n_obs, const HaltonConfig& config, std::size_t memory_cap = kDefaultMemoryCap);

    std::size_t n_obs() const noexcept { return n_; }
    std::size_t draws() const noexcept { return r_; }
    std::size_t dims() const noexcept { return d_; }
    const HaltonConfig& config() const noexcept { return config_; }

    double operator()(std::size_t i, std::size_t r, std::size_t d) const noexcept { return z_[(i * r_ + r) * d_ + d]; }

    /// Draws of observation i, laid out r-major: [r * D + d].
    std::span<const double> observation(std::size_t i) const noexcept {
        return {z_.data() + i * r_ * d_, r_ * d_};
    }

    std::span<const double> values() const noexcept { return z_; }

private:
    HaltonConfig config_;
    std::size_t n_ = 0, r_ = 0, d_ = 0;
    std::vector<double> z_;
};

inline DrawStore build_draw_store(std::size_t n_obs, const HaltonConfig& config) { return DrawStore(n_obs, config); }

}  // namespace fegap
