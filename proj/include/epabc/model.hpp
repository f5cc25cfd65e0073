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

#ifndef EPABC_MODEL_HPP
#define EPABC_MODEL_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "epabc/errors.hpp"
#include "epabc/gaussian.hpp"
#include "epabc/rng.hpp"

namespace epabc {

/// Summary s_i(y_i) of one simulated data chunk. Raw chunks are never
/// surfaced: the engine only consumes summaries, and expensive models'
/// chunks would dominate memory otherwise.
struct ChunkDraw {
  Eigen::VectorXd summary;
};

/// RNG key for one chunk simulation. Randomness is a pure function of
/// (model seed, site unless IID, the proposal theta itself, draw index), so
/// simulations are reproducible regardless of threading or batch layout.
inline std::uint64_t chunk_rng_key(std::uint64_t model_seed,
                                   std::uint64_t site_key,
                                   const Eigen::VectorXd& theta,
                                   std::uint64_t draw_index) {
  std::uint64_t h = hash_key({model_seed, site_key, draw_index});
  for (Eigen::Index j = 0; j < theta.size(); ++j) {
    h = hash_key({h, double_key(theta[j])});
  }
  return h;
}

/// The model-plugin contract: a per-chunk simulator producing local
/// summaries, the observed summaries, and a Gaussian prior. Immutable after
/// construction; simulate_chunk is callable concurrently.
struct ModelSpec {
  int n_chunks = 0;           // n >= 1
  Eigen::Index theta_dim = 0; // p >= 1
  NaturalParams prior;
  std::vector<Eigen::VectorXd> observed_summaries;  // length n, sites 1..n
  bool iid = false;           // enables recycling
  std::uint64_t model_seed = 0;

  /// Simulator body: (site i in 1..n, theta, rng) -> summary vector. The rng
  /// is pre-seeded by simulate_chunk; implementations must draw all their
  /// randomness from it. For iid models the body must not depend on i.
  std::function<Eigen::VectorXd(int, const Eigen::VectorXd&, Xoshiro256&)>
      simulator;

  /// Draws one chunk from f_i(. | theta) and returns its summary.
  /// Throws SimulationFailure on a non-finite result; callers treat that as
  /// a rejected draw.
  ChunkDraw simulate_chunk(int i, const Eigen::VectorXd& theta,
                           std::uint64_t draw_index) const {
    if (i < 1 || i > n_chunks) {
      throw Error("simulate_chunk: site index out of range");
    }
    if (!theta.allFinite()) {
      throw SimulationFailure("simulate_chunk: non-finite theta");
    }
    const std::uint64_t site_key = iid ? 0 : static_cast<std::uint64_t>(i);
    Xoshiro256 rng(chunk_rng_key(model_seed, site_key, theta, draw_index));
    Eigen::VectorXd s = simulator(i, theta, rng);
    if (!s.allFinite()) {
      throw SimulationFailure("simulate_chunk: non-finite summary");
    }
    return ChunkDraw{std::move(s)};
  }

  const Eigen::VectorXd& observed(int i) const {
    if (i < 1 || i > n_chunks) {
      throw Error("observed: site index out of range");
    }
    return observed_summaries[static_cast<std::size_t>(i - 1)];
  }
};

/// Built-in conjugate test model: y_i | theta ~ N(theta, 1) with the
/// identity summary. IID, so recycling applies.
inline ModelSpec make_gauss_mean_model(const std::vector<double>& observed,
                                       const MomentParams& prior,
                                       std::uint64_t model_seed) {
  if (observed.empty()) {
    throw Error("make_gauss_mean_model: needs at least one observation");
  }
  if (prior.dim() != 1) {
    throw Error("make_gauss_mean_model: prior must be 1-D");
  }
  ModelSpec m;
  m.n_chunks = static_cast<int>(observed.size());
  m.theta_dim = 1;
  m.prior = to_natural(prior);
  m.iid = true;
  m.model_seed = model_seed;
  m.observed_summaries.reserve(observed.size());
  for (double y : observed) {
    m.observed_summaries.push_back(Eigen::VectorXd::Constant(1, y));
  }
  m.simulator = [](int /*i*/, const Eigen::VectorXd& theta, Xoshiro256& rng) {
    return Eigen::VectorXd::Constant(1, theta[0] + rng.normal());
  };
  return m;
}

/// Closed-form posterior for the GaussMean model: prior N(mu0, s0^2), unit
/// observation variance. Oracle for acceptance tests.
inline MomentParams gauss_mean_exact_posterior(const MomentParams& prior,
                                               const std::vector<double>& y) {
  if (prior.dim() != 1) {
    throw Error("gauss_mean_exact_posterior: prior must be 1-D");
  }
  const double s0sq = prior.Sigma(0, 0);
  const double mu0 = prior.mu(0);
  const double n = static_cast<double>(y.size());
  double sum = 0.0;
  for (double v : y) sum += v;
  const double post_var = 1.0 / (1.0 / s0sq + n);
  const double post_mu = post_var * (mu0 / s0sq + sum);
  return MomentParams(Eigen::VectorXd::Constant(1, post_mu),
                      Eigen::MatrixXd::Constant(1, 1, post_var));
}

/// Built-in Markov test model: y_i | y_{i-1}, theta ~ N(rho * y*_{i-1},
/// sigma^2) with theta = (artanh rho, log sigma), conditioning on the
/// OBSERVED previous value (chunk context baked in at construction). Not IID.
inline ModelSpec make_ar1_model(const std::vector<double>& observed,
                                double y0, const MomentParams& prior,
                                std::uint64_t model_seed) {
  if (observed.empty()) {
    throw Error("make_ar1_model: needs at least one observation");
  }
  if (prior.dim() != 2) {
    throw Error("make_ar1_model: prior must be 2-D");
  }
  ModelSpec m;
  m.n_chunks = static_cast<int>(observed.size());
  m.theta_dim = 2;
  m.prior = to_natural(prior);
  m.iid = false;
  m.model_seed = model_seed;
  m.observed_summaries.reserve(observed.size());
  for (double y : observed) {
    m.observed_summaries.push_back(Eigen::VectorXd::Constant(1, y));
  }
  auto context = std::make_shared<std::vector<double>>();
  context->reserve(observed.size());
  context->push_back(y0);
  for (std::size_t i = 0; i + 1 < observed.size(); ++i) {
    context->push_back(observed[i]);
  }
  m.simulator = [context](int i, const Eigen::VectorXd& theta,
                          Xoshiro256& rng) {
    const double rho = std::tanh(theta[0]);
    const double sigma = std::exp(theta[1]);
    const double prev = (*context)[static_cast<std::size_t>(i - 1)];
    return Eigen::VectorXd::Constant(1, rho * prev + sigma * rng.normal());
  };
  return m;
}

}  // namespace epabc

#endif  // EPABC_MODEL_HPP
