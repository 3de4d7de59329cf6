#pragma once

#include <functional>

#include "veegan/tape.hpp"

namespace veegan::nd {

/// A scalar function of one tensor, built on a fresh tape for every evaluation.
using ScalarFn = std::function<Var(Tape&, const Var&)>;

/// Max over coordinates of |autodiff - central difference| / max(1, |central difference|).
/// Throws NonFiniteError naming the coordinate if a probe evaluates to NaN/Inf.
double grad_check(const ScalarFn& f, const Tensor& at, double step = 1e-5);

}  // namespace veegan::nd
