// Copyright 2026 The epabc authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef EPABC_QMC_HPP
#define EPABC_QMC_HPP

#include <Eigen/Dense>
#include <cstdint>

#include "epabc/errors.hpp"
#include "epabc/gaussian.hpp"
#include "epabc/normal.hpp"

namespace epabc {

/// Number of leading Halton points the ABC estimator skips. The first points
/// of an unscrambled Halton sequence (1/2, 1/4, ...) would dominate tiny
/// batches; a fixed burn-in avoids that while keeping streams deterministic.
inline constexpr std::uint64_t kQmcBurnIn = 64;

/// First 64 primes: one Halton base per parameter dimension, starting at 2.
inline constexpr unsigned kHaltonPrimes[64] = {
    2,   3,   5,   7,   11,  13,  17,  19,  23,  29,  31,  37,  41,
    43,  47,  53,  59,  61,  67,  71,  73,  79,  83,  89,  97,  101,
    103, 107, 109, 113, 127, 131, 137, 139, 149, 151, 157, 163, 167,
    173, 179, 181, 191, 193, 197, 199, 211, 223, 227, 229, 233, 239,
    241, 251, 257, 263, 269, 271, 277, 281, 283, 293, 307, 311};

/// Radical inverse of `index` in base `base`: digit-reversed fraction. For
/// index >= 1 the value lies strictly inside (0, 1).
inline double radical_inverse(std::uint64_t index, unsigned base) {
  const double inv_base = 1.0 / static_cast<double>(base);
  double inv = inv_base;
  double result = 0.0;
  while (index > 0) {
    result += static_cast<double>(index % base) * inv;
    index /= base;
    inv *= inv_base;
  }
  return result;
}

/// The m-th Halton point (1-based index) in `dim` dimensions, one prime base
/// per coordinate.
inline Eigen::VectorXd halton_point(std::uint64_t index, Eigen::Index dim) {
  if (dim < 1 || dim > 64) {
    throw Error("halton_point: dimension must be in [1, 64]");
  }
  Eigen::VectorXd u(dim);
  for (Eigen::Index j = 0; j < dim; ++j) {
    u[j] = radical_inverse(index, kHaltonPrimes[j]);
  }
  return u;
}

/// `count` consecutive Gaussian QMC proposals: theta^(m) = mu + L Phi^{-1}(u),
/// with L the lower Cholesky factor of the target covariance and u the Halton
/// points at indices stream_offset+1 .. stream_offset+count. Coordinatewise
/// Phi^{-1} is the Rosenblatt map for an independent unit normal.
/// Deterministic in (count, target, stream_offset); disjoint offsets yield
/// disjoint subsequences of one global stream.
inline Eigen::MatrixXd qmc_gaussian_stream(Eigen::Index count,
                                           const MomentParams& target,
                                           std::uint64_t stream_offset) {
  if (count < 1) {
    throw Error("qmc_gaussian_stream: count must be >= 1");
  }
  Eigen::LLT<Eigen::MatrixXd> llt(target.Sigma);
  if (llt.info() != Eigen::Success) {
    throw NotPositiveDefinite(
        "qmc_gaussian_stream: target covariance is not positive definite");
  }
  const Eigen::MatrixXd chol_l = llt.matrixL();
  const Eigen::Index p = target.dim();
  Eigen::MatrixXd thetas(count, p);
  Eigen::VectorXd z(p);
  for (Eigen::Index m = 0; m < count; ++m) {
    const std::uint64_t index = stream_offset + static_cast<std::uint64_t>(m) + 1;
    for (Eigen::Index j = 0; j < p; ++j) {
      z[j] = normal_quantile(radical_inverse(index, kHaltonPrimes[j]));
    }
    thetas.row(m) = (target.mu + chol_l * z).transpose();
  }
  return thetas;
}

}  // namespace epabc

#endif  // EPABC_QMC_HPP
