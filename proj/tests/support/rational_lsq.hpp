#pragma once

// Exact least-squares oracle: builds the degree-d normal equations over
// arbitrary-precision rationals, solves by Gaussian elimination with exact
// pivoting, and evaluates the fitted polynomial at the target step. Every
// operation is exact, so the result is the mathematical least-squares value
// (unique whenever the normal matrix is nonsingular) with zero rounding.

#include <array>
#include <cstddef>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

namespace testsupport {

using Rational = boost::multiprecision::cpp_rational;

inline Rational rational_polyfit_eval(const std::vector<std::pair<Rational, Rational>>& pts,
                                      int degree, const Rational& target) {
    const size_t cols = static_cast<size_t>(degree) + 1;

    // Normal equations A c = b with A = VᵀV, b = Vᵀy over the raw steps.
    std::vector<std::vector<Rational>> A(cols, std::vector<Rational>(cols, Rational(0)));
    std::vector<Rational> b(cols, Rational(0));
    for (const auto& [s, y] : pts) {
        std::vector<Rational> row(cols);
        Rational power = 1;
        for (size_t c = 0; c < cols; ++c) {
            row[c] = power;
            power *= s;
        }
        for (size_t i = 0; i < cols; ++i) {
            for (size_t j = 0; j < cols; ++j) A[i][j] += row[i] * row[j];
            b[i] += row[i] * y;
        }
    }

    // Gaussian elimination; any nonzero pivot is exact.
    for (size_t col = 0; col < cols; ++col) {
        size_t pivot = col;
        while (pivot < cols && A[pivot][col] == 0) ++pivot;
        if (pivot == cols) throw std::runtime_error("rational_polyfit_eval: singular system");
        std::swap(A[col], A[pivot]);
        std::swap(b[col], b[pivot]);
        for (size_t r = 0; r < cols; ++r) {
            if (r == col || A[r][col] == 0) continue;
            const Rational factor = A[r][col] / A[col][col];
            for (size_t c = col; c < cols; ++c) A[r][c] -= factor * A[col][c];
            b[r] -= factor * b[col];
        }
    }

    std::vector<Rational> coef(cols);
    for (size_t i = 0; i < cols; ++i) coef[i] = b[i] / A[i][i];

    Rational value = 0;
    Rational power = 1;
    for (size_t c = 0; c < cols; ++c) {
        value += coef[c] * power;
        power *= target;
    }
    return value;
}

}  // namespace testsupport
