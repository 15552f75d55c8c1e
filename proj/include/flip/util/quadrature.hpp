#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "flip/util/error.hpp"

namespace flip::quadrature {

// Gauss-Kronrod 7-15 pair on [-1, 1].
inline constexpr double kNodes[8] = {
    0.991455371120813, 0.949107912342759, 0.864864423359769,
    0.741531185599394, 0.586087235467691, 0.405845151377397,
    0.207784955007898, 0.000000000000000};
inline constexpr double kKronrodW[8] = {
    0.022935322010529, 0.063092092629979, 0.104790010322250,
    0.140653259715525, 0.169004726639267, 0.190350578064785,
    0.204432940075298, 0.209482141084728};
inline constexpr double kGaussW[4] = {0.129484966168870, 0.279705391489277,
                                      0.381830050505119, 0.417959183673469};

struct GkResult {
  double value = 0.0;
  double error = 0.0;
};

inline GkResult gk15(const std::function<double(double)>& f, double a, double b) {
  const double c = 0.5 * (a + b);
  const double h = 0.5 * (b - a);
  double kron = 0.0, gauss = 0.0;
  for (int i = 0; i < 8; ++i) {
    const double x = kNodes[i] * h;
    const double fv = (i == 7) ? f(c) : f(c - x) + f(c + x);
    kron += kKronrodW[i] * fv;
    if (i % 2 == 1) gauss += kGaussW[i / 2] * fv;
  }
  GkResult r;
  r.value = kron * h;
  r.error = std::fabs((kron - gauss) * h);
  return r;
}

// Adaptive bisection to an absolute tolerance. `splits` seeds interior break
// points (kinks of the integrand) before adaptation starts.
inline double integrate(const std::function<double(double)>& f, double a,
                        double b, double abs_tol,
                        const std::vector<double>& splits = {}) {
  std::vector<double> points{a, b};
  for (double s : splits)
    if (s > a && s < b) points.push_back(s);
  std::sort(points.begin(), points.end());

  struct Piece {
    double a, b, tol;
    int depth;
  };
  std::vector<Piece> stack;
  const double total_len = b - a;
  for (std::size_t i = 0; i + 1 < points.size(); ++i)
    stack.push_back({points[i], points[i + 1],
                     abs_tol * (points[i + 1] - points[i]) / total_len, 0});
  double total = 0.0;
  while (!stack.empty()) {
    const Piece piece = stack.back();
    stack.pop_back();
    const GkResult r = gk15(f, piece.a, piece.b);
    if (r.error <= piece.tol || piece.depth >= 60) {
      if (piece.depth >= 60 && r.error > 64.0 * piece.tol)
        throw Error("quadrature failed to converge on [" +
                    std::to_string(piece.a) + ", " + std::to_string(piece.b) + "]");
      total += r.value;
    } else {
      const double mid = 0.5 * (piece.a + piece.b);
      stack.push_back({piece.a, mid, 0.5 * piece.tol, piece.depth + 1});
      stack.push_back({mid, piece.b, 0.5 * piece.tol, piece.depth + 1});
    }
  }
  return total;
}

}  // namespace flip::quadrature
