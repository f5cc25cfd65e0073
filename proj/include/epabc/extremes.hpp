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

#ifndef EPABC_EXTREMES_HPP
#define EPABC_EXTREMES_HPP

#include <Eigen/Dense>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <utility>
#include <vector>

#include "epabc/bessel.hpp"
#include "epabc/errors.hpp"
#include "epabc/gaussian.hpp"
#include "epabc/model.hpp"
#include "epabc/rng.hpp"

namespace epabc {

/// Whittle-Matern correlation
///   rho(h) = 2^{1-nu}/Gamma(nu) * (h/c)^nu * K_nu(h/c),
/// evaluated in log space so large nu / extreme lags neither overflow nor
/// lose the tail; rho(0) is the limit 1, underflow returns 0.
inline double whittle_matern(double h, double nu, double c) {
  if (!(nu > 0.0) || !(c > 0.0) || !(h >= 0.0) || !std::isfinite(h) ||
      !std::isfinite(nu) || !std::isfinite(c)) {
    throw Error("whittle_matern: requires h >= 0, nu > 0, c > 0, all finite");
  }
  if (h == 0.0) return 1.0;
  const double z = h / c;
  const double log_rho = (1.0 - nu) * std::log(2.0) - std::lgamma(nu) +
                         nu * std::log(z) + log_bessel_k(nu, z);
  const double rho = std::exp(log_rho);
  return std::min(rho, 1.0);
}

/// Station coordinates in the plane with precomputed pairwise (log)
/// distances. A single station is allowed (degenerate layouts are useful for
/// marginal checks); the madogram regression additionally needs d >= 3 and
/// at least two distinct distances, tested via supports_madogram().
struct StationLayout {
  Eigen::MatrixXd coords;              // d x 2
  Eigen::MatrixXd dist;                // d x d, zero diagonal
  std::vector<std::pair<int, int>> pairs;  // (j, k), j < k
  std::vector<double> pairwise_log_dists;  // aligned with pairs

  static StationLayout from_coords(Eigen::MatrixXd c) {
    if (c.rows() < 1 || c.cols() != 2) {
      throw Error("StationLayout: coords must be a d x 2 matrix, d >= 1");
    }
    if (!c.allFinite()) throw Error("StationLayout: non-finite coordinates");
    StationLayout lay;
    const Eigen::Index d = c.rows();
    lay.coords = std::move(c);
    lay.dist = Eigen::MatrixXd::Zero(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index k = j + 1; k < d; ++k) {
        const double h = (lay.coords.row(j) - lay.coords.row(k)).norm();
        if (!(h > 0.0)) {
          throw Error("StationLayout: duplicated station coordinates");
        }
        lay.dist(j, k) = lay.dist(k, j) = h;
        lay.pairs.emplace_back(static_cast<int>(j), static_cast<int>(k));
        lay.pairwise_log_dists.push_back(std::log(h));
      }
    }
    return lay;
  }

  Eigen::Index n_stations() const { return coords.rows(); }

  bool supports_madogram() const {
    if (n_stations() < 3) return false;
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (double ld : pairwise_log_dists) {
      lo = std::min(lo, ld);
      hi = std::max(hi, ld);
    }
    // Relative tolerance: distances equal up to rounding (e.g. an
    // equilateral triangle built from irrational coordinates) must not pass
    // as "two distinct distances" -- the regression design would be singular
    // to machine precision.
    return hi - lo > 1e-12 * std::max(1.0, std::fabs(hi));
  }
};

/// Correlation parameters on the unconstrained scale: theta = (log nu, log c).
struct CorrelationModel {
  double log_nu = 0.0;
  double log_c = 0.0;

  double nu() const { return std::exp(log_nu); }
  double c() const { return std::exp(log_c); }
};

/// Max-stable simulator knobs. mu_const is the analytic constant
/// E[max(0, Z)] = (2 pi)^{-1/2} for a standard normal Z, fixed by the
/// construction (not estimated). tail_factor controls adaptive truncation:
/// spikes stop once s_k * tail_factor can no longer beat the smallest
/// running maximum (tail_factor = 0 degenerates to a single spike);
/// spike_cap is a hard safety bound.
struct MaxStableConfig {
  int spike_cap = 10000;
  double tail_factor = 5.0;
  static constexpr double mu_const = 0.3989422804014326779;  // (2 pi)^{-1/2}

  void validate() const {
    if (spike_cap < 1) throw Error("MaxStableConfig: spike_cap must be >= 1");
    if (!(tail_factor >= 0.0)) {
      throw Error("MaxStableConfig: tail_factor must be >= 0");
    }
  }
};

/// Factorized (jittered) Whittle-Matern correlation over a station layout,
/// reusable across draws at the same parameters. Construction adds 1e-10 to
/// the diagonal and escalates tenfold up to 1e-6 before failing: Matern
/// matrices at large nu are numerically near-singular.
class GpSampler {
 public:
  GpSampler(const StationLayout& layout, const CorrelationModel& corr) {
    const Eigen::Index d = layout.n_stations();
    const double nu = corr.nu();
    const double c = corr.c();
    if (!(nu > 0.0) || !(c > 0.0) || !std::isfinite(nu) || !std::isfinite(c)) {
      throw Error("GpSampler: nu and c must be finite and positive");
    }
    Eigen::MatrixXd rho = Eigen::MatrixXd::Identity(d, d);
    for (Eigen::Index j = 0; j < d; ++j) {
      for (Eigen::Index k = j + 1; k < d; ++k) {
        rho(j, k) = rho(k, j) = whittle_matern(layout.dist(j, k), nu, c);
      }
    }
    for (jitter_ = 1e-10; jitter_ <= 1e-6 * (1.0 + 1e-12); jitter_ *= 10.0) {
      Eigen::MatrixXd jittered = rho;
      jittered.diagonal().array() += jitter_;
      Eigen::LLT<Eigen::MatrixXd> llt(jittered);
      if (llt.info() == Eigen::Success) {
        chol_l_ = llt.matrixL();
        return;
      }
    }
    throw FactorizationFailure(
        "GpSampler: correlation matrix not factorizable at maximum jitter");
  }

  /// One zero-mean path L z with z standard normal from `rng`.
  Eigen::VectorXd draw(Xoshiro256& rng) const {
    Eigen::VectorXd z(chol_l_.rows());
    for (Eigen::Index j = 0; j < z.size(); ++j) z[j] = rng.normal();
    return chol_l_ * z;
  }

  double jitter() const { return jitter_; }
  Eigen::Index dim() const { return chol_l_.rows(); }

 private:
  Eigen::MatrixXd chol_l_;
  double jitter_ = 0.0;
};

/// One stationary Gaussian-process realization at the layout's stations,
/// reproducible from (seed, draw_index).
inline Eigen::VectorXd gp_sample(const StationLayout& layout,
                                 const CorrelationModel& corr,
                                 std::uint64_t seed,
                                 std::uint64_t draw_index) {
  const GpSampler gp(layout, corr);
  Xoshiro256 rng(hash_key({seed, 0x6770ULL /* "gp" */,
                           double_key(corr.log_nu), double_key(corr.log_c),
                           draw_index}));
  return gp.draw(rng);
}

namespace detail {

/// Core max-stable draw given a prepared sampler and an already-seeded rng:
/// Y(x) = max_k { s_k max(0, Z_k(x)) } with s_k = 1/(mu_const Gamma_k) and
/// Gamma_k cumulative Exp(1) arrivals, realizing the intensity
/// mu^{-1} s^{-2} ds in decreasing spike order. Stops once the next spike
/// cannot change the result: s_k * tail_factor <= min running max (k > 1),
/// or at spike_cap.
inline Eigen::VectorXd simulate_maxstable_draw(const GpSampler& gp,
                                               const MaxStableConfig& cfg,
                                               Xoshiro256& rng) {
  const Eigen::Index d = gp.dim();
  Eigen::VectorXd y = Eigen::VectorXd::Zero(d);
  double gamma_k = 0.0;
  for (int k = 1; k <= cfg.spike_cap; ++k) {
    gamma_k += rng.exponential();
    const double s_k = 1.0 / (MaxStableConfig::mu_const * gamma_k);
    if (k > 1 && s_k * cfg.tail_factor <= y.minCoeff()) break;
    const Eigen::VectorXd z = gp.draw(rng);
    for (Eigen::Index j = 0; j < d; ++j) {
      y[j] = std::max(y[j], s_k * std::max(0.0, z[j]));
    }
  }
  return y;
}

}  // namespace detail

/// One max-stable realization over the layout's stations with approximately
/// unit Frechet marginals (F(y) = exp(-1/y); exact in the untruncated
/// limit). Reproducible from (seed, draw_index, theta).
inline Eigen::VectorXd simulate_maxstable(const StationLayout& layout,
                                          const CorrelationModel& corr,
                                          const MaxStableConfig& cfg,
                                          std::uint64_t seed,
                                          std::uint64_t draw_index) {
  cfg.validate();
  const GpSampler gp(layout, corr);
  Xoshiro256 rng(hash_key({seed, 0x6D617853ULL /* "maxS" */,
                           double_key(corr.log_nu), double_key(corr.log_c),
                           draw_index}));
  return detail::simulate_maxstable_draw(gp, cfg, rng);
}

/// F-madogram OLS summary: regress log|F(y_j) - F(y_k)| on the precomputed
/// log distances over all station pairs (F = unit Frechet CDF) and return
/// (intercept a, slope b). Pairs with exactly equal F values carry a -inf
/// response and are dropped (they have probability zero under the continuous
/// model); DegenerateDesign if fewer than two usable pairs remain or all
/// usable pairs share one distance.
inline Eigen::Vector2d fmadogram_summary(const Eigen::VectorXd& y,
                                         const StationLayout& layout) {
  if (y.size() != layout.n_stations()) {
    throw Error("fmadogram_summary: y length must match station count");
  }
  if (!layout.supports_madogram()) {
    throw DegenerateDesign(
        "fmadogram_summary: layout needs >= 3 stations and >= 2 distinct "
        "distances");
  }
  if (!(y.minCoeff() > 0.0)) {
    throw Error("fmadogram_summary: y must be positive (Frechet support)");
  }
  Eigen::VectorXd f(y.size());
  for (Eigen::Index j = 0; j < y.size(); ++j) f[j] = std::exp(-1.0 / y[j]);

  // OLS through the 2x2 normal equations in centered form.
  double sx = 0.0, sy = 0.0;
  long n_used = 0;
  std::vector<double> xs, ys;
  xs.reserve(layout.pairs.size());
  ys.reserve(layout.pairs.size());
  for (std::size_t idx = 0; idx < layout.pairs.size(); ++idx) {
    const auto [j, k] = layout.pairs[idx];
    const double df = std::fabs(f[j] - f[k]);
    if (df == 0.0) continue;  // tied F values: dropped
    xs.push_back(layout.pairwise_log_dists[idx]);
    ys.push_back(std::log(df));
    sx += xs.back();
    sy += ys.back();
    ++n_used;
  }
  if (n_used < 2) {
    throw DegenerateDesign("fmadogram_summary: fewer than 2 usable pairs");
  }
  const double xbar = sx / static_cast<double>(n_used);
  const double ybar = sy / static_cast<double>(n_used);
  double sxx = 0.0, sxy = 0.0;
  for (long t = 0; t < n_used; ++t) {
    const double dx = xs[static_cast<std::size_t>(t)] - xbar;
    sxx += dx * dx;
    sxy += dx * (ys[static_cast<std::size_t>(t)] - ybar);
  }
  if (!(sxx > 0.0)) {
    throw DegenerateDesign("fmadogram_summary: singular design");
  }
  const double b = sxy / sxx;
  const double a = ybar - b * xbar;
  return Eigen::Vector2d(a, b);
}

/// Trapezoid-rule values of integral_0^{h_max} |rho_{nu,c} - rho_{nu0,c0}| dh
/// over a (nu, c) grid; exactly zero at the reference cell. n_quad is the
/// number of trapezoid intervals.
inline Eigen::MatrixXd correlation_distance_grid(
    const std::vector<double>& nu_values, const std::vector<double>& c_values,
    double nu0, double c0, double h_max, int n_quad) {
  if (nu_values.empty() || c_values.empty()) {
    throw Error("correlation_distance_grid: empty grid");
  }
  if (n_quad < 2) throw Error("correlation_distance_grid: n_quad must be >= 2");
  if (!(h_max > 0.0)) throw Error("correlation_distance_grid: h_max must be > 0");
  const double step = h_max / static_cast<double>(n_quad);
  std::vector<double> ref(static_cast<std::size_t>(n_quad) + 1);
  for (int t = 0; t <= n_quad; ++t) {
    ref[static_cast<std::size_t>(t)] =
        whittle_matern(step * static_cast<double>(t), nu0, c0);
  }
  Eigen::MatrixXd grid(static_cast<Eigen::Index>(nu_values.size()),
                       static_cast<Eigen::Index>(c_values.size()));
  for (std::size_t a = 0; a < nu_values.size(); ++a) {
    for (std::size_t b = 0; b < c_values.size(); ++b) {
      double acc = 0.0;
      for (int t = 0; t <= n_quad; ++t) {
        const double diff =
            std::fabs(whittle_matern(step * static_cast<double>(t),
                                     nu_values[a], c_values[b]) -
                      ref[static_cast<std::size_t>(t)]);
        acc += (t == 0 || t == n_quad) ? 0.5 * diff : diff;
      }
      grid(static_cast<Eigen::Index>(a), static_cast<Eigen::Index>(b)) =
          acc * step;
    }
  }
  return grid;
}

/// n IID max-stable replicates at fixed parameters (rows = replicates);
/// the synthetic stand-in for an observed spatial-extremes dataset.
inline Eigen::MatrixXd simulate_maxstable_dataset(
    const StationLayout& layout, const CorrelationModel& corr,
    const MaxStableConfig& cfg, std::uint64_t seed, int n_replicates) {
  cfg.validate();
  if (n_replicates < 1) {
    throw Error("simulate_maxstable_dataset: need n >= 1 replicates");
  }
  const GpSampler gp(layout, corr);
  Eigen::MatrixXd data(n_replicates, layout.n_stations());
  for (int i = 0; i < n_replicates; ++i) {
    Xoshiro256 rng(hash_key({seed, 0x64617461ULL /* "data" */,
                             double_key(corr.log_nu), double_key(corr.log_c),
                             static_cast<std::uint64_t>(i)}));
    data.row(i) = detail::simulate_maxstable_draw(gp, cfg, rng).transpose();
  }
  return data;
}

/// Wraps the max-stable simulator as an IID ModelSpec: theta = (log nu,
/// log c), one replicate per chunk, F-madogram (a, b) as the local summary.
/// Realizations with a zero station value or a degenerate madogram design
/// surface as SimulationFailure, which estimators count as rejected draws.
inline ModelSpec make_maxstable_model(const StationLayout& layout,
                                      const Eigen::MatrixXd& observed,
                                      const MomentParams& prior,
                                      const MaxStableConfig& cfg,
                                      std::uint64_t model_seed) {
  cfg.validate();
  if (!layout.supports_madogram()) {
    throw Error(
        "make_maxstable_model: layout needs >= 3 stations and >= 2 distinct "
        "distances");
  }
  if (observed.rows() < 1 || observed.cols() != layout.n_stations()) {
    throw Error(
        "make_maxstable_model: observed must be n x d with one replicate per "
        "row");
  }
  if (prior.dim() != 2) {
    throw Error("make_maxstable_model: prior must be 2-D (log nu, log c)");
  }
  ModelSpec m;
  m.n_chunks = static_cast<int>(observed.rows());
  m.theta_dim = 2;
  m.prior = to_natural(prior);
  m.iid = true;
  m.model_seed = model_seed;
  m.observed_summaries.reserve(static_cast<std::size_t>(observed.rows()));
  for (Eigen::Index i = 0; i < observed.rows(); ++i) {
    m.observed_summaries.push_back(
        fmadogram_summary(observed.row(i).transpose(), layout));
  }
  auto shared_layout = std::make_shared<StationLayout>(layout);
  const MaxStableConfig cfg_copy = cfg;
  m.simulator = [shared_layout, cfg_copy](int /*i*/,
                                          const Eigen::VectorXd& theta,
                                          Xoshiro256& rng) -> Eigen::VectorXd {
    const CorrelationModel corr{theta[0], theta[1]};
    Eigen::VectorXd y;
    try {
      const GpSampler gp(*shared_layout, corr);
      y = detail::simulate_maxstable_draw(gp, cfg_copy, rng);
    } catch (const FactorizationFailure&) {
      throw SimulationFailure(
          "max-stable chunk: correlation factorization failed");
    }
    if (!(y.minCoeff() > 0.0)) {
      throw SimulationFailure("max-stable chunk: zero station value");
    }
    try {
      return fmadogram_summary(y, *shared_layout);
    } catch (const DegenerateDesign&) {
      throw SimulationFailure("max-stable chunk: degenerate madogram design");
    }
  };
  return m;
}

/// Deterministic synthetic station layout: d points uniform on
/// [0, side]^2 from the given seed, re-drawn (never shifted) until all
/// pairwise distances exceed 1% of the side length.
inline StationLayout make_synthetic_layout(int d, double side,
                                           std::uint64_t seed) {
  if (d < 1) throw Error("make_synthetic_layout: d must be >= 1");
  if (!(side > 0.0)) throw Error("make_synthetic_layout: side must be > 0");
  Xoshiro256 rng(hash_key({seed, 0x6C6179ULL /* "lay" */}));
  const double min_sep = 0.01 * side;
  for (int attempt = 0; attempt < 1000; ++attempt) {
    Eigen::MatrixXd coords(d, 2);
    for (int j = 0; j < d; ++j) {
      coords(j, 0) = side * rng.uniform();
      coords(j, 1) = side * rng.uniform();
    }
    bool ok = true;
    for (int j = 0; j < d && ok; ++j) {
      for (int k = j + 1; k < d && ok; ++k) {
        if ((coords.row(j) - coords.row(k)).norm() < min_sep) ok = false;
      }
    }
    if (ok) return StationLayout::from_coords(std::move(coords));
  }
  throw Error("make_synthetic_layout: could not place separated stations");
}

}  // namespace epabc

#endif  // EPABC_EXTREMES_HPP
