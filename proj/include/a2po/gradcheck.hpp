#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "a2po/rng.hpp"

namespace a2po {

struct GradCheckReport {
    double max_rel_error = 0.0;
    std::size_t worst_coord = 0;
    int coords_checked = 0;
    bool pass = false;
};

inline constexpr double kGradCheckTol = 1e-4;

// Central finite differences of f against an analytic gradient on the given
// coordinates. w is restored after each probe. The relative-error floor
// keeps exactly-zero coordinates from dividing by rounding noise.
template <typename F>
GradCheckReport finite_difference_check(std::vector<double>& w, F&& f, const std::vector<double>& analytic,
                                        const std::vector<std::size_t>& coords, double h = 1e-5,
                                        double tol = kGradCheckTol) {
    GradCheckReport report;
    for (std::size_t c : coords) {
        const double saved = w[c];
        w[c] = saved + h;
        const double fp = f();
        w[c] = saved - h;
        const double fm = f();
        w[c] = saved;
        const double fd = (fp - fm) / (2.0 * h);
        const double denom = std::max({std::abs(analytic[c]), std::abs(fd), 1e-6});
        const double rel = std::abs(analytic[c] - fd) / denom;
        if (rel > report.max_rel_error) {
            report.max_rel_error = rel;
            report.worst_coord = c;
        }
        ++report.coords_checked;
    }
    report.pass = report.max_rel_error <= tol;
    return report;
}

inline std::vector<std::size_t> random_coords(std::size_t total, int count, RngStream& rng) {
    std::vector<std::size_t> coords;
    coords.reserve(count);
    for (int i = 0; i < count; ++i)
        coords.push_back(static_cast<std::size_t>(rng.uniform_int(total)));
    return coords;
}

}  // namespace a2po
