#include "sts/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "sts/errors.hpp"

namespace sts {

double finite_diff_error(const std::function<double()>& evaluate, std::span<double> coords,
                         std::span<const double> analytic, double h) {
  if (coords.size() != analytic.size()) throw DimensionError("finite_diff_error: gradient length mismatch");
  double worst = 0.0;
  for (std::size_t i = 0; i < coords.size(); ++i) {
    const double saved = coords[i];
    coords[i] = saved + h;
    const double up = evaluate();
    coords[i] = saved - h;
    const double down = evaluate();
    coords[i] = saved;
    const double numeric = (up - down) / (2.0 * h);
    worst = std::max(worst, std::abs(analytic[i] - numeric) / std::max(1.0, std::abs(analytic[i])));
  }
  return worst;
}

double finite_diff_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double h) {
  Tensor probe = Tensor::from(x.shape(), x.to_vector(), true);
  f(probe).backward();
  const std::vector<double> analytic = probe.grad();
  auto coords = probe.mutable_data();
  return finite_diff_error(
      [&] {
        NoGradGuard guard;
        return f(probe).item();
      },
      coords, analytic, h);
}

}  // namespace sts
