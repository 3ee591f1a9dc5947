#pragma once

#include <cmath>
#include <optional>
#include <utility>

namespace microforge {

struct RootResult {
  double x = 0.0;
  int iterations = 0;
};

// Safeguarded Newton on a sign-changing bracket [lo, hi]. Every Newton step
// that would leave the current bracket, or fails to halve it, is replaced by
// a bisection step, so convergence is guaranteed whenever f(lo)*f(hi) <= 0.
// Returns nullopt when the endpoints share a sign.
template <class F, class DF>
std::optional<RootResult> solve_bracketed(F&& f, DF&& df, double lo, double hi,
                                          double x_tol = 1e-15, int max_iter = 200) {
  double flo = f(lo);
  double fhi = f(hi);
  if (flo == 0.0) return RootResult{lo, 0};
  if (fhi == 0.0) return RootResult{hi, 0};
  if ((flo > 0.0) == (fhi > 0.0)) return std::nullopt;
  if (flo > 0.0) {
    std::swap(lo, hi);  // keep f(lo) < 0 < f(hi); lo may now exceed hi
  }

  double x = 0.5 * (lo + hi);
  double dx_old = std::abs(hi - lo);
  double dx = dx_old;
  double fx = f(x);
  double dfx = df(x);
  for (int it = 1; it <= max_iter; ++it) {
    const bool newton_leaves = ((x - hi) * dfx - fx) * ((x - lo) * dfx - fx) > 0.0;
    const bool newton_slow = std::abs(2.0 * fx) > std::abs(dx_old * dfx);
    dx_old = dx;
    if (newton_leaves || newton_slow) {
      dx = 0.5 * (hi - lo);
      x = lo + dx;
    } else {
      dx = fx / dfx;
      x -= dx;
    }
    if (std::abs(dx) <= x_tol * std::max(1.0, std::abs(x))) return RootResult{x, it};
    fx = f(x);
    dfx = df(x);
    if (fx == 0.0) return RootResult{x, it};
    if (fx < 0.0) lo = x; else hi = x;
  }
  return RootResult{x, max_iter};
}

// Golden-section minimisation of a unimodal function on [lo, hi].
template <class F>
double golden_minimize(F&& f, double lo, double hi, double x_tol = 1e-12) {
  constexpr double inv_phi = 0.6180339887498949;
  double a = lo, b = hi;
  double c = b - inv_phi * (b - a);
  double d = a + inv_phi * (b - a);
  double fc = f(c), fd = f(d);
  while (std::abs(b - a) > x_tol * std::max(1.0, std::abs(a) + std::abs(b))) {
    if (fc < fd) {
      b = d; d = c; fd = fc;
      c = b - inv_phi * (b - a);
      fc = f(c);
    } else {
      a = c; c = d; fc = fd;
      d = a + inv_phi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

}  // namespace microforge
