#pragma once

// Central finite differences against analytic gradients. Test-only; relies on
// nothing but forward loss evaluations.

#include <algorithm>
#include <cmath>
#include <functional>

#include "pixar/model.hpp"
#include "pixar/rng.hpp"

namespace pixar::testing {

inline constexpr double kFdStep = 1e-4;
inline constexpr double kFdRelTol = 1e-4;
// Below this magnitude a coordinate's gradient is compared absolutely: the
// O(h^2) truncation error of the stencil is ~1e-8 there.
inline constexpr double kFdAbsFloor = 1e-4;

inline double relative_error(double analytic, double numeric) {
  const double scale = std::max({std::abs(analytic), std::abs(numeric), kFdAbsFloor});
  return std::abs(analytic - numeric) / scale;
}

inline double central_difference(Matrix& tensor, Eigen::Index idx,
                                 const std::function<double()>& loss) {
  const double saved = tensor.data()[idx];
  tensor.data()[idx] = saved + kFdStep;
  const double up = loss();
  tensor.data()[idx] = saved - kFdStep;
  const double down = loss();
  tensor.data()[idx] = saved;
  return (up - down) / (2.0 * kFdStep);
}

/// Worst relative error over `samples` random coordinates of `tensor`.
inline double check_tensor(Matrix& tensor, const Matrix& analytic,
                           const std::function<double()>& loss, Rng& rng, int samples) {
  double worst = 0.0;
  for (int k = 0; k < samples; ++k) {
    const auto idx = static_cast<Eigen::Index>(rng.below(static_cast<std::uint64_t>(tensor.size())));
    worst = std::max(worst, relative_error(analytic.data()[idx], central_difference(tensor, idx, loss)));
  }
  return worst;
}

}  // namespace pixar::testing
