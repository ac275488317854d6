#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>

namespace amf {

/// Uniform 1-d grid `start + i * step`, i = 0..intervals.
struct UniformGrid {
    double start = 0.0;
    double step = 1.0;
    std::size_t intervals = 0;

    [[nodiscard]] std::size_t size() const noexcept { return intervals + 1; }
    [[nodiscard]] double at(std::size_t i) const noexcept { return start + static_cast<double>(i) * step; }
    [[nodiscard]] double end() const noexcept { return at(intervals); }

    /// Index of `x` if it lies on the grid (relative tolerance 1e-9 of a step), otherwise throws.
    [[nodiscard]] std::size_t index_of(double x) const {
        const double r = (x - start) / step;
        const double n = std::round(r);
        if (n < 0.0 || n > static_cast<double>(intervals) || std::abs(r - n) > 1e-9) {
            throw std::invalid_argument("time/space value is not on the grid");
        }
        return static_cast<std::size_t>(n);
    }

    [[nodiscard]] bool same_as(const UniformGrid& o, double tol = 1e-12) const noexcept {
        return intervals == o.intervals && std::abs(start - o.start) <= tol &&
               std::abs(step - o.step) <= tol * std::max(1.0, std::abs(step));
    }

    /// Grid with `intervals` chosen so that `step * intervals` covers [start, stop] exactly.
    static UniformGrid covering(double start, double stop, double approx_step) {
        if (!(stop > start) || !(approx_step > 0.0)) throw std::invalid_argument("bad grid extent");
        const auto n = static_cast<std::size_t>(std::ceil((stop - start) / approx_step - 1e-9));
        return UniformGrid{start, (stop - start) / static_cast<double>(n), n};
    }
};

/// Composite trapezoid rule of samples on a uniform grid with spacing `h`.
inline double trapezoid(std::span<const double> f, double h) noexcept {
    if (f.size() < 2) return 0.0;
    double s = 0.5 * (f.front() + f.back());
    for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
    return s * h;
}

}  // namespace amf
