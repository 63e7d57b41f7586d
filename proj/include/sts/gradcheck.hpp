#pragma once

#include <functional>
#include <span>

#include "sts/tensor.hpp"

namespace sts {

/// Max over coordinates of |analytic - central difference| / max(1, |analytic|)
/// for a scalar-valued, deterministic `f` at `x`.
double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h = 1e-5);

/// Same measure for a quantity that reads `coords` in place (e.g. a model
/// parameter). `coords` is restored after each probe.
double finite_diff_error(const std::function<double()>& evaluate, std::span<double> coords,
                         std::span<const double> analytic, double h = 1e-5);

}  // namespace sts
