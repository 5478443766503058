#pragma once

#include <cmath>
#include <cstdint>

namespace flowcls {

/// Single-pass central moments up to order four (Terriberry's update of
/// Welford's recurrence). Variance is population-style; skewness is g1 and
/// kurtosis is excess kurtosis g2.
class RunningMoments {
public:
    void push(double x) noexcept {
        const double n1 = static_cast<double>(n_);
        ++n_;
        const double n = static_cast<double>(n_);
        const double delta = x - mean_;
        const double delta_n = delta / n;
        const double delta_n2 = delta_n * delta_n;
        const double term1 = delta * delta_n * n1;
        mean_ += delta_n;
        m4_ += term1 * delta_n2 * (n * n - 3 * n + 3) + 6 * delta_n2 * m2_ - 4 * delta_n * m3_;
        m3_ += term1 * delta_n * (n - 2) - 3 * delta_n * m2_;
        m2_ += term1;
        if (n_ == 1 || x < min_) min_ = x;
        if (n_ == 1 || x > max_) max_ = x;
    }

    std::uint64_t count() const noexcept { return n_; }
    double mean() const noexcept { return mean_; }
    double min() const noexcept { return min_; }
    double max() const noexcept { return max_; }
    double m2() const noexcept { return m2_; }
    double m3() const noexcept { return m3_; }
    double m4() const noexcept { return m4_; }

    bool variance_defined() const noexcept { return n_ >= 2; }
    // Shape moments need a non-degenerate spread.
    bool shape_defined() const noexcept { return n_ >= 2 && m2_ > 0.0; }

    double variance() const noexcept {
        return variance_defined() ? m2_ / static_cast<double>(n_) : 0.0;
    }
    double skewness() const noexcept {
        if (!shape_defined()) return 0.0;
        const double n = static_cast<double>(n_);
        return (m3_ / n) / std::pow(m2_ / n, 1.5);
    }
    double kurtosis() const noexcept {
        if (!shape_defined()) return 0.0;
        const double n = static_cast<double>(n_);
        return (m4_ / n) / ((m2_ / n) * (m2_ / n)) - 3.0;
    }

private:
    std::uint64_t n_ = 0;
    double mean_ = 0.0;
    double m2_ = 0.0;
    double m3_ = 0.0;
    double m4_ = 0.0;
    double min_ = 0.0;
    double max_ = 0.0;
};

}  // namespace flowcls
