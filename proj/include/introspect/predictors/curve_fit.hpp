#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <utility>

#include "introspect/errors.hpp"

namespace introspect::predictors {

using HistoryPoint = std::pair<double, double>;  // (step, value)
using History4 = std::array<HistoryPoint, 4>;

namespace detail {

inline int distinct_steps(const History4& pts) {
    int distinct = 0;
    for (size_t i = 0; i < pts.size(); ++i) {
        bool seen = false;
        for (size_t j = 0; j < i; ++j)
            if (pts[j].first == pts[i].first) seen = true;
        if (!seen) ++distinct;
    }
    return distinct;
}

// Least-squares polynomial fit of the requested degree via normal equations
// in double. Steps are affinely mapped onto [−1, 1] first; the fitted
// polynomial is invariant under that reparametrization, but the normal
// matrix conditioning improves enormously for step values in the thousands.
template <int Degree>
double polyfit_predict(const History4& pts, double target_step) {
    static_assert(Degree == 1 || Degree == 2);
    constexpr int kCols = Degree + 1;
    if (detail::distinct_steps(pts) < kCols)
        throw FitError("curve fit: need " + std::to_string(kCols) +
                       " distinct steps for a degree-" + std::to_string(Degree) + " fit");

    double lo = pts[0].first, hi = pts[0].first;
    for (const auto& [s, _] : pts) {
        lo = std::min(lo, s);
        hi = std::max(hi, s);
    }
    const double mid = 0.5 * (lo + hi);
    const double half = 0.5 * (hi - lo);  // > 0 because steps are distinct

    Eigen::Matrix<double, 4, kCols> V;
    Eigen::Matrix<double, 4, 1> y;
    for (int i = 0; i < 4; ++i) {
        const double s = (pts[static_cast<size_t>(i)].first - mid) / half;
        double power = 1.0;
        for (int c = 0; c < kCols; ++c) {
            V(i, c) = power;
            power *= s;
        }
        y(i) = pts[static_cast<size_t>(i)].second;
    }

    const Eigen::Matrix<double, kCols, kCols> A = V.transpose() * V;
    const Eigen::Matrix<double, kCols, 1> b = V.transpose() * y;
    const Eigen::Matrix<double, kCols, 1> coef = A.fullPivLu().solve(b);
    if (!coef.allFinite()) throw FitError("curve fit: singular normal matrix");

    const double s = (target_step - mid) / half;
    double value = 0.0, power = 1.0;
    for (int c = 0; c < kCols; ++c) {
        value += coef(c) * power;
        power *= s;
    }
    return value;
}

}  // namespace detail

// Fits a + b·s + c·s² to the four points and evaluates at target_step.
inline double quadratic_fit_predict(const History4& pts, double target_step) {
    return detail::polyfit_predict<2>(pts, target_step);
}

// Fits a + b·s and evaluates at target_step.
inline double linear_fit_predict(const History4& pts, double target_step) {
    return detail::polyfit_predict<1>(pts, target_step);
}

}  // namespace introspect::predictors
