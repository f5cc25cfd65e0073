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

#ifndef EPABC_ABC_HPP
#define EPABC_ABC_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <utility>
#include <vector>

#include "epabc/ep.hpp"
#include "epabc/errors.hpp"
#include "epabc/gaussian.hpp"
#include "epabc/model.hpp"
#include "epabc/qmc.hpp"
#include "epabc/rng.hpp"

namespace epabc {

/// Simulation batch size for the adaptive "sample until" loop: whole batches
/// are simulated until the acceptance target or the cap is reached, which
/// amortizes setup and keeps QMC streams aligned across runs.
inline constexpr long kAbcBatch = 1024;

/// Rejection-ABC knobs. distance_weights (empty = all ones) define the
/// weighted Euclidean norm on summary vectors.
struct AbcConfig {
  double epsilon = 1.0;
  long m_target = 500;  // acceptances required (M0)
  long m_max = 100000;  // simulation cap per site update
  bool use_qmc = true;
  Eigen::VectorXd distance_weights;

  void validate() const {
    if (!(epsilon > 0.0)) throw Error("AbcConfig: epsilon must be > 0");
    if (m_target < 1) throw Error("AbcConfig: m_target must be >= 1");
    if (m_max < m_target) throw Error("AbcConfig: m_target must be <= m_max");
  }
};

/// Weighted Euclidean distance between summary vectors.
inline double summary_distance(const Eigen::VectorXd& a,
                               const Eigen::VectorXd& b,
                               const Eigen::VectorXd& weights) {
  if (a.size() != b.size()) {
    throw Error("summary_distance: dimension mismatch");
  }
  if (weights.size() == 0) return (a - b).norm();
  if (weights.size() != a.size()) {
    throw Error("summary_distance: weights dimension mismatch");
  }
  return std::sqrt((weights.array() * (a - b).array().square()).sum());
}

/// Realized distances for one site's simulations; input to epsilon
/// calibration. Failed simulations appear as +inf distances so that
/// n_simulated always equals distances.size().
struct AcceptanceRecord {
  int site = 0;
  std::vector<double> distances;
  long n_simulated = 0;
  long n_accepted = 0;
};

/// estimate_site_moments plus everything the caller may want to reuse.
struct SiteMomentsResult {
  HybridMomentEstimate est;
  AcceptanceRecord record;
  bool target_met = false;
};

namespace detail {

inline Eigen::MatrixXd prng_gaussian_block(long count,
                                           const Eigen::VectorXd& mu,
                                           const Eigen::MatrixXd& chol_l,
                                           Xoshiro256& rng) {
  const Eigen::Index p = mu.size();
  Eigen::MatrixXd thetas(count, p);
  Eigen::VectorXd z(p);
  for (long m = 0; m < count; ++m) {
    for (Eigen::Index j = 0; j < p; ++j) z[j] = rng.normal();
    thetas.row(m) = (mu + chol_l * z).transpose();
  }
  return thetas;
}

inline HybridMomentEstimate moments_of_accepted(
    const std::vector<Eigen::VectorXd>& accepted, long n_simulated,
    Eigen::Index p) {
  HybridMomentEstimate est;
  est.n_accepted = static_cast<long>(accepted.size());
  est.n_simulated = n_simulated;
  est.Z_hat = n_simulated > 0 ? static_cast<double>(est.n_accepted) /
                                    static_cast<double>(n_simulated)
                              : 0.0;
  est.n_eff = est.n_accepted;
  est.mu_h = Eigen::VectorXd::Zero(p);
  est.Sigma_h = Eigen::MatrixXd::Zero(p, p);
  if (accepted.empty()) return est;
  for (const auto& th : accepted) est.mu_h += th;
  est.mu_h /= static_cast<double>(accepted.size());
  for (const auto& th : accepted) {
    const Eigen::VectorXd d = th - est.mu_h;
    est.Sigma_h += d * d.transpose();
  }
  est.Sigma_h /= static_cast<double>(accepted.size());
  return est;
}

}  // namespace detail

/// Local rejection-ABC moment estimation for one site: proposals from the
/// cavity N(mu_-i, Sigma_-i) (consecutive QMC points past the burn-in, or
/// pseudo-random draws keyed by rng_key), one simulated chunk per proposal,
/// acceptance when the summary distance is <= epsilon. Runs whole batches of
/// kAbcBatch until n_accepted >= m_target or n_simulated >= m_max, then
/// returns the sample mean/covariance of the accepted proposals and
/// Z_hat = n_accepted / n_simulated. Never throws on a missed target; check
/// target_met (the engine applies its own min-acceptance policy).
inline SiteMomentsResult estimate_site_moments_full(
    int i, const MomentParams& cavity_moments, const ModelSpec& model,
    const AbcConfig& cfg, std::uint64_t rng_key) {
  cfg.validate();
  const Eigen::Index p = cavity_moments.dim();
  Eigen::LLT<Eigen::MatrixXd> llt(cavity_moments.Sigma);
  if (llt.info() != Eigen::Success) {
    throw CavityNotPositiveDefinite(
        "estimate_site_moments: cavity covariance not positive definite");
  }
  const Eigen::MatrixXd chol_l = llt.matrixL();

  SiteMomentsResult out;
  out.record.site = i;
  std::vector<Eigen::VectorXd> accepted;
  Xoshiro256 prng(rng_key);
  std::uint64_t qmc_offset = kQmcBurnIn;
  long n_sim = 0;
  long n_acc = 0;

  while (n_acc < cfg.m_target && n_sim < cfg.m_max) {
    const long batch = std::min<long>(kAbcBatch, cfg.m_max - n_sim);
    Eigen::MatrixXd thetas =
        cfg.use_qmc
            ? qmc_gaussian_stream(batch, cavity_moments, qmc_offset)
            : detail::prng_gaussian_block(batch, cavity_moments.mu, chol_l,
                                          prng);
    qmc_offset += static_cast<std::uint64_t>(batch);
    for (long m = 0; m < batch; ++m) {
      const Eigen::VectorXd theta = thetas.row(m).transpose();
      double dist = std::numeric_limits<double>::infinity();
      try {
        const ChunkDraw draw = model.simulate_chunk(
            i, theta, static_cast<std::uint64_t>(n_sim));
        dist = summary_distance(draw.summary, model.observed(i),
                                cfg.distance_weights);
      } catch (const SimulationFailure&) {
        // Counted as a rejected draw at infinite distance.
      }
      out.record.distances.push_back(dist);
      ++n_sim;
      if (dist <= cfg.epsilon) {
        accepted.push_back(theta);
        ++n_acc;
      }
    }
  }

  out.record.n_simulated = n_sim;
  out.record.n_accepted = n_acc;
  out.est = detail::moments_of_accepted(accepted, n_sim, p);
  out.target_met = n_acc >= cfg.m_target;
  return out;
}

/// Throwing wrapper around estimate_site_moments_full: raises
/// InsufficientAcceptances when the simulation cap was hit before reaching
/// m_target acceptances.
inline HybridMomentEstimate estimate_site_moments(
    int i, const MomentParams& cavity_moments, const ModelSpec& model,
    const AbcConfig& cfg, std::uint64_t rng_key) {
  SiteMomentsResult res =
      estimate_site_moments_full(i, cavity_moments, model, cfg, rng_key);
  if (!res.target_met) {
    throw InsufficientAcceptances(
        "estimate_site_moments: simulation cap reached before the "
        "acceptance target",
        res.record.n_accepted, res.record.n_simulated);
  }
  return res.est;
}

/// Convenience overload keyed by the (seed, pass, site) triple.
inline HybridMomentEstimate estimate_site_moments(
    int i, const MomentParams& cavity_moments, const ModelSpec& model,
    const AbcConfig& cfg, std::uint64_t seed, int pass, int site) {
  return estimate_site_moments(
      i, cavity_moments, model, cfg,
      hash_key({seed, static_cast<std::uint64_t>(pass),
                static_cast<std::uint64_t>(site)}));
}

/// Engine-facing provider running one rejection-ABC estimation per site
/// update. Keeps the latest pass's acceptance records (per-site slots,
/// written disjointly under block parallelism) for epsilon calibration.
class RejectionEstimator : public MomentEstimator {
 public:
  RejectionEstimator(const ModelSpec& model, AbcConfig cfg)
      : model_(model), cfg_(std::move(cfg)) {
    cfg_.validate();
    records_.resize(static_cast<std::size_t>(model.n_chunks) + 1);
  }

  HybridMomentEstimate estimate(int site, int /*pass*/,
                                const NaturalParams& /*cavity_nat*/,
                                const MomentParams& cavity,
                                std::uint64_t rng_key) override {
    SiteMomentsResult res =
        estimate_site_moments_full(site, cavity, model_, cfg_, rng_key);
    records_[static_cast<std::size_t>(site)] = res.record;
    return res.est;
  }

  /// Acceptance records from each site's most recent update.
  const std::vector<AcceptanceRecord>& last_records() const {
    return records_;
  }

  const AbcConfig& config() const { return cfg_; }

 private:
  const ModelSpec& model_;
  AbcConfig cfg_;
  std::vector<AcceptanceRecord> records_;
};

/// Shared proposal pool for IID-model recycling: parameters drawn from one
/// Gaussian, each paired with one simulated chunk summary (site-agnostic
/// because chunks are IID). Replaced wholesale when the ESS drops below
/// ess_threshold * M.
struct RecyclePool {
  Eigen::MatrixXd thetas;  // M x p
  std::vector<Eigen::VectorXd> chunk_summaries;  // length M; empty = failed
  MomentParams proposal;
  double ess_threshold = 0.5;

  long size() const { return static_cast<long>(thetas.rows()); }
};

/// Effective sample size (sum w)^2 / sum w^2 of importance sampling from
/// pool.proposal toward new_target, evaluated at the pool's parameters with
/// exact Gaussian log-density ratios. Always in [1, M].
inline double effective_sample_size(const RecyclePool& pool,
                                    const MomentParams& new_target) {
  const long m = pool.size();
  if (m < 1) throw Error("effective_sample_size: empty pool");
  const GaussianDensity num(new_target);
  const GaussianDensity den(pool.proposal);
  std::vector<double> log_w(static_cast<std::size_t>(m));
  double max_lw = -std::numeric_limits<double>::infinity();
  for (long k = 0; k < m; ++k) {
    const Eigen::VectorXd th = pool.thetas.row(k).transpose();
    log_w[static_cast<std::size_t>(k)] = num.log_pdf(th) - den.log_pdf(th);
    max_lw = std::max(max_lw, log_w[static_cast<std::size_t>(k)]);
  }
  double sw = 0.0;
  double sw2 = 0.0;
  for (double lw : log_w) {
    const double w = std::exp(lw - max_lw);  // ESS is scale invariant
    sw += w;
    sw2 += w * w;
  }
  return (sw * sw) / sw2;
}

/// Draws a fresh pool of size m from `proposal` (QMC past the burn-in, or
/// pseudo-random keyed by rng_key) and simulates one IID chunk per draw.
/// Failed simulations leave an empty summary slot, which downstream weights
/// treat as a rejected draw.
inline RecyclePool make_recycle_pool(const ModelSpec& model,
                                     const MomentParams& proposal, long m,
                                     bool use_qmc, double ess_threshold,
                                     std::uint64_t rng_key) {
  if (!model.iid) {
    throw NonIIDModel("make_recycle_pool: model chunks are not IID");
  }
  if (m < 1) throw Error("make_recycle_pool: pool size must be >= 1");
  RecyclePool pool;
  pool.proposal = proposal;
  pool.ess_threshold = ess_threshold;
  if (use_qmc) {
    pool.thetas = qmc_gaussian_stream(m, proposal, kQmcBurnIn);
  } else {
    Eigen::LLT<Eigen::MatrixXd> llt(proposal.Sigma);
    if (llt.info() != Eigen::Success) {
      throw NotPositiveDefinite("make_recycle_pool: proposal not PD");
    }
    Xoshiro256 prng(rng_key);
    pool.thetas = detail::prng_gaussian_block(m, proposal.mu,
                                              Eigen::MatrixXd(llt.matrixL()),
                                              prng);
  }
  pool.chunk_summaries.resize(static_cast<std::size_t>(m));
  for (long k = 0; k < m; ++k) {
    const Eigen::VectorXd th = pool.thetas.row(k).transpose();
    try {
      pool.chunk_summaries[static_cast<std::size_t>(k)] =
          model.simulate_chunk(1, th, static_cast<std::uint64_t>(k)).summary;
    } catch (const SimulationFailure&) {
      // leave empty: never accepted
    }
  }
  return pool;
}

/// Importance-weighted hybrid moments for one site from a shared pool.
/// The weight of pool point theta is
///   (|Q_cav| / |Q_pool|) * exp{ -1/2 theta^T (Q_cav - Q_pool) theta
///                               + (r_cav - r_pool)^T theta }
///     * I{ summary distance <= epsilon },
/// which for a pool drawn from the current global (Q_pool = Q, r_pool = r,
/// Q_cav = Q - Q_i) is exactly the classic recycling weight
/// (|Q - Q_i|/|Q|) exp{ 1/2 theta^T Q_i theta - r_i^T theta } I{...}.
/// Returns Z_hat = M^{-1} sum w and the weighted mean/covariance.
/// Throws DegenerateWeights when every weight vanishes.
inline HybridMomentEstimate recycled_site_estimate(
    int site, const NaturalParams& cavity_nat, const NaturalParams& pool_nat,
    const RecyclePool& pool, const ModelSpec& model, const AbcConfig& cfg) {
  const long m = pool.size();
  const Eigen::Index p = pool.thetas.cols();
  Eigen::LLT<Eigen::MatrixXd> llt_cav(cavity_nat.Q);
  Eigen::LLT<Eigen::MatrixXd> llt_pool(pool_nat.Q);
  if (llt_cav.info() != Eigen::Success) {
    throw CavityNotPositiveDefinite(
        "recycled_site_estimate: cavity precision not positive definite");
  }
  if (llt_pool.info() != Eigen::Success) {
    throw NotPositiveDefinite(
        "recycled_site_estimate: pool precision not positive definite");
  }
  const double logdet_cav =
      2.0 * llt_cav.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet_pool =
      2.0 * llt_pool.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double log_prefactor = logdet_cav - logdet_pool;
  const Eigen::MatrixXd dq = cavity_nat.Q - pool_nat.Q;
  const Eigen::VectorXd dr = cavity_nat.r - pool_nat.r;

  double sum_w = 0.0;
  double sum_w2 = 0.0;
  long n_acc = 0;
  Eigen::VectorXd sum_wth = Eigen::VectorXd::Zero(p);
  Eigen::MatrixXd sum_wthth = Eigen::MatrixXd::Zero(p, p);
  for (long k = 0; k < m; ++k) {
    const auto& summary = pool.chunk_summaries[static_cast<std::size_t>(k)];
    if (summary.size() == 0) continue;  // failed simulation
    const double dist =
        summary_distance(summary, model.observed(site), cfg.distance_weights);
    if (!(dist <= cfg.epsilon)) continue;
    ++n_acc;
    const Eigen::VectorXd th = pool.thetas.row(k).transpose();
    const double log_w =
        log_prefactor - 0.5 * th.dot(dq * th) + dr.dot(th);
    const double w = std::exp(log_w);
    sum_w += w;
    sum_w2 += w * w;
    sum_wth += w * th;
    sum_wthth += w * (th * th.transpose());
  }
  if (!(sum_w > 0.0)) {
    throw DegenerateWeights(
        "recycled_site_estimate: all importance weights vanished for site " +
        std::to_string(site));
  }
  HybridMomentEstimate est;
  est.n_accepted = n_acc;
  est.n_simulated = m;
  est.n_eff = sum_w2 > 0.0
                  ? static_cast<long>(sum_w * sum_w / sum_w2)
                  : 0;
  est.Z_hat = sum_w / static_cast<double>(m);
  est.mu_h = sum_wth / sum_w;
  est.Sigma_h = sum_wthth / sum_w - est.mu_h * est.mu_h.transpose();
  return est;
}

/// One full recycled pass over all sites (the IID-recycling algorithm in its
/// parallel form): checks the pool's ESS against the current global
/// approximation, regenerates the pool from it when ESS/M falls below
/// ess_threshold, then computes every site's importance-weighted moments
/// from the (shared) pool. Sites whose weights all vanish or whose cavity is
/// not positive definite come back as std::nullopt (the engine-level skip).
inline std::pair<std::vector<std::optional<HybridMomentEstimate>>, bool>
recycled_pass(const EPState& state, RecyclePool& pool, const ModelSpec& model,
              const AbcConfig& cfg, std::uint64_t refresh_rng_key = 0) {
  if (!model.iid) {
    throw NonIIDModel("recycled_pass: model chunks are not IID");
  }
  const int n = state.n_chunks();
  bool refreshed = false;
  if (is_positive_definite(state.global.Q)) {
    const MomentParams global_m = to_moments(state.global);
    const double ess = effective_sample_size(pool, global_m);
    if (ess / static_cast<double>(pool.size()) < pool.ess_threshold) {
      pool = make_recycle_pool(model, global_m, pool.size(), cfg.use_qmc,
                               pool.ess_threshold, refresh_rng_key);
      refreshed = true;
    }
  }
  const NaturalParams pool_nat = to_natural(pool.proposal);
  std::vector<std::optional<HybridMomentEstimate>> estimates(
      static_cast<std::size_t>(n) + 1);
  for (int i = 1; i <= n; ++i) {
    const NaturalParams cav =
        cavity(state.global, state.sites[static_cast<std::size_t>(i)]);
    if (!is_positive_definite(cav.Q)) continue;
    try {
      estimates[static_cast<std::size_t>(i)] =
          recycled_site_estimate(i, cav, pool_nat, pool, model, cfg);
    } catch (const DegenerateWeights&) {
      // site skipped
    }
  }
  return {std::move(estimates), refreshed};
}

/// Engine-facing provider that reuses one IID pool across all sites of a
/// pass, refreshing it at pass start when the ESS against the current global
/// drops below the threshold.
class RecyclingEstimator : public MomentEstimator {
 public:
  RecyclingEstimator(const ModelSpec& model, AbcConfig cfg, long pool_size,
                     double ess_threshold, std::uint64_t seed)
      : model_(model),
        cfg_(std::move(cfg)),
        pool_size_(pool_size),
        ess_threshold_(ess_threshold),
        seed_(seed) {
    cfg_.validate();
    if (!model.iid) {
      throw NonIIDModel("RecyclingEstimator: model chunks are not IID");
    }
    if (!(ess_threshold > 0.0 && ess_threshold <= 1.0)) {
      throw Error("RecyclingEstimator: ess_threshold must be in (0, 1]");
    }
  }

  bool begin_pass(int /*pass*/, const EPState& state) override {
    if (!is_positive_definite(state.global.Q)) return false;
    const MomentParams global_m = to_moments(state.global);
    if (!pool_) {
      pool_ = make_recycle_pool(model_, global_m, pool_size_, cfg_.use_qmc,
                                ess_threshold_, next_refresh_key());
      pool_nat_ = to_natural(pool_->proposal);
      return false;  // initial fill, not a refresh
    }
    const double ess = effective_sample_size(*pool_, global_m);
    if (ess / static_cast<double>(pool_->size()) < ess_threshold_) {
      *pool_ = make_recycle_pool(model_, global_m, pool_size_, cfg_.use_qmc,
                                 ess_threshold_, next_refresh_key());
      pool_nat_ = to_natural(pool_->proposal);
      return true;
    }
    return false;
  }

  HybridMomentEstimate estimate(int site, int /*pass*/,
                                const NaturalParams& cavity_nat,
                                const MomentParams& /*cavity*/,
                                std::uint64_t /*rng_key*/) override {
    if (!pool_) {
      throw Error("RecyclingEstimator: begin_pass was never run");
    }
    return recycled_site_estimate(site, cavity_nat, pool_nat_, *pool_,
                                  model_, cfg_);
  }

  const RecyclePool& pool() const {
    if (!pool_) throw Error("RecyclingEstimator: no pool yet");
    return *pool_;
  }

 private:
  std::uint64_t next_refresh_key() {
    const std::uint64_t key =
        hash_key({seed_, 0x706F6F6CULL /* "pool" */, refresh_count_});
    ++refresh_count_;
    return key;
  }

  const ModelSpec& model_;
  AbcConfig cfg_;
  long pool_size_;
  double ess_threshold_;
  std::uint64_t seed_;
  std::uint64_t refresh_count_ = 0;
  std::optional<RecyclePool> pool_;
  NaturalParams pool_nat_;
};

/// Smallest epsilon giving every site an acceptance proportion of at least
/// `floor` on its recorded distances: the max over sites of each site's
/// ceil(floor * n_simulated)-th smallest distance.
inline double calibrate_epsilon(const std::vector<AcceptanceRecord>& records,
                                double floor_prop) {
  if (!(floor_prop > 0.0 && floor_prop < 1.0)) {
    throw Error("calibrate_epsilon: floor must be in (0, 1)");
  }
  std::vector<const AcceptanceRecord*> usable;
  for (const auto& rec : records) {
    if (!rec.distances.empty()) usable.push_back(&rec);
  }
  if (usable.empty()) {
    throw EmptyRecords("calibrate_epsilon: no acceptance records");
  }
  double eps = 0.0;
  for (const AcceptanceRecord* rec : usable) {
    if (rec->n_simulated < 1 ||
        rec->n_simulated != static_cast<long>(rec->distances.size())) {
      throw Error("calibrate_epsilon: record distances/n_simulated mismatch");
    }
    const long k = std::max<long>(
        1, static_cast<long>(
               std::ceil(floor_prop *
                         static_cast<double>(rec->n_simulated) -
                         1e-12)));
    std::vector<double> d = rec->distances;
    auto nth = d.begin() + (k - 1);
    std::nth_element(d.begin(), nth, d.end());
    eps = std::max(eps, *nth);
  }
  return eps;
}

}  // namespace epabc

#endif  // EPABC_ABC_HPP
