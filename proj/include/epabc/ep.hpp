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

#ifndef EPABC_EP_HPP
#define EPABC_EP_HPP

#include <Eigen/Dense>
#include <algorithm>
#include <chrono>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "epabc/errors.hpp"
#include "epabc/gaussian.hpp"
#include "epabc/model.hpp"
#include "epabc/rng.hpp"

namespace epabc {

/// A moment estimate failed the engine's minimum-acceptance policy.
class DegenerateEstimate : public Error {
 public:
  explicit DegenerateEstimate(const std::string& what) : Error(what) {}
};

/// Every site in a full pass was skipped; the run cannot make progress
/// (typically epsilon is far too small for the simulation budget).
class AllSitesSkipped : public Error {
 public:
  explicit AllSitesSkipped(const std::string& what) : Error(what) {}
};

enum class ScheduleKind { Sequential, Parallel, BlockParallel };

/// Update schedule. Block-parallel with n_core=1 degenerates to sequential
/// and with n_core=n+1 to parallel; all three share one implementation, so
/// the degeneracies hold bit-for-bit.
struct Schedule {
  ScheduleKind kind = ScheduleKind::Sequential;
  int n_core = 1;  // BlockParallel only

  static Schedule sequential() { return {ScheduleKind::Sequential, 1}; }
  static Schedule parallel() { return {ScheduleKind::Parallel, 1}; }
  static Schedule block_parallel(int n_core) {
    if (n_core < 1) throw Error("Schedule: n_core must be >= 1");
    return {ScheduleKind::BlockParallel, n_core};
  }

  /// Width of one block given n+1 total sites (prior included).
  int block_width(int n_sites_total) const {
    switch (kind) {
      case ScheduleKind::Sequential: return 1;
      case ScheduleKind::Parallel: return n_sites_total;
      case ScheduleKind::BlockParallel: return std::min(n_core, n_sites_total);
    }
    return 1;
  }

  std::string label() const {
    switch (kind) {
      case ScheduleKind::Sequential: return "sequential";
      case ScheduleKind::Parallel: return "parallel";
      case ScheduleKind::BlockParallel:
        return "block_parallel_" + std::to_string(n_core);
    }
    return "?";
  }
};

/// Engine knobs: fractional step alpha in (0,1], minimum acceptances for a
/// usable moment estimate, pass budget, and the convergence tolerance.
struct UpdatePolicy {
  double alpha = 1.0;
  long min_accept = 2;
  int max_passes = 20;
  double convergence_tol = 1e-4;

  void validate() const {
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw Error("UpdatePolicy: alpha must be in (0, 1]");
    }
    if (min_accept < 1) throw Error("UpdatePolicy: min_accept must be >= 1");
    if (max_passes < 1) throw Error("UpdatePolicy: max_passes must be >= 1");
    if (!(convergence_tol > 0.0)) {
      throw Error("UpdatePolicy: convergence_tol must be > 0");
    }
  }
};

/// Moment summary of one site's hybrid (cavity x likelihood factor)
/// distribution, as returned by a moment estimator.
///
/// n_eff is the effective sample count behind Sigma_h: the number of
/// (equally weighted) accepted draws for rejection sampling, or the
/// importance-weight ESS for recycled estimates. Zero means Sigma_h is
/// exact and the precision-debiasing step in site_update must not apply.
struct HybridMomentEstimate {
  double Z_hat = 0.0;  // acceptance-probability estimate, >= 0
  Eigen::VectorXd mu_h;
  Eigen::MatrixXd Sigma_h;
  long n_accepted = 0;
  long n_simulated = 0;
  long n_eff = 0;
};

/// Global approximation plus the per-site factors. Site 0 is the prior and
/// is never modified; global == sum of sites is maintained at every block
/// boundary.
struct EPState {
  std::vector<NaturalParams> sites;  // index 0..n
  NaturalParams global;

  static EPState init(const NaturalParams& prior, int n) {
    if (n < 1) throw Error("EPState: need n >= 1 chunks");
    EPState st;
    st.sites.resize(static_cast<std::size_t>(n) + 1,
                    NaturalParams::zero(prior.dim()));
    st.sites[0] = prior;
    st.refresh_global();
    return st;
  }

  int n_chunks() const { return static_cast<int>(sites.size()) - 1; }

  /// Recomputes global = sum of all sites (the block-boundary refresh).
  void refresh_global() {
    NaturalParams sum = sites[0];
    for (std::size_t i = 1; i < sites.size(); ++i) {
      sum = add(sum, sites[i]);
    }
    global = std::move(sum);
  }

  /// Max-norm gap between the stored global and the sum of sites.
  double sum_invariant_gap() const {
    NaturalParams sum = sites[0];
    for (std::size_t i = 1; i < sites.size(); ++i) {
      sum = add(sum, sites[i]);
    }
    const double gr = (global.r - sum.r).cwiseAbs().maxCoeff();
    const double gq = (global.Q - sum.Q).cwiseAbs().maxCoeff();
    return std::max(gr, gq);
  }
};

/// One site update (moment matching plus fractional damping):
/// with alpha=1, global_new = natural(mu_h, Sigma_h) and
/// site_new = site_old + global_new - global_old; with alpha < 1 the global
/// moves to the natural-parameter convex combination
/// alpha * natural(E_h) + (1-alpha) * global_old and the site absorbs the
/// same difference, preserving the sum invariant exactly.
/// Throws DegenerateEstimate when n_accepted < policy.min_accept and
/// NotPositiveDefinite when Sigma_h (or the blended global precision) fails
/// factorization; callers skip the site in both cases.
///
/// Sampled estimates (n_eff > 0) get a precision-debiasing correction before
/// inversion: the inverse of a population-divisor sample covariance of n
/// Gaussian draws overestimates the true precision by a factor n/(n-p-2)
/// (mean of the inverse-Wishart), so Sigma_h is inflated by that factor.
/// Without it every site precision inherits a small positive bias that the
/// cavity subtraction cannot cancel, and the summed global precision ends up
/// biased upward by roughly n_sites * (p+2)/n_eff relative.
inline std::pair<NaturalParams, NaturalParams> site_update(
    int i, const HybridMomentEstimate& est, const EPState& state,
    const UpdatePolicy& policy) {
  if (i < 1 || i >= static_cast<int>(state.sites.size())) {
    throw Error("site_update: site index must be in 1..n");
  }
  if (est.n_accepted < policy.min_accept) {
    throw DegenerateEstimate(
        "site_update: n_accepted below policy.min_accept");
  }
  const Eigen::Index p = est.mu_h.size();
  const double debias =
      est.n_eff > p + 2
          ? static_cast<double>(est.n_eff) / static_cast<double>(est.n_eff - p - 2)
          : 1.0;
  const NaturalParams tilted =
      to_natural(MomentParams(est.mu_h, debias * est.Sigma_h));
  const NaturalParams& global_old = state.global;
  const double a = policy.alpha;
  NaturalParams global_new(a * tilted.r + (1.0 - a) * global_old.r,
                           a * tilted.Q + (1.0 - a) * global_old.Q);
  if (!is_positive_definite(global_new.Q)) {
    throw NotPositiveDefinite("site_update: blended global precision not PD");
  }
  const NaturalParams& site_old = state.sites[static_cast<std::size_t>(i)];
  NaturalParams site_new(site_old.r + global_new.r - global_old.r,
                         site_old.Q + global_new.Q - global_old.Q);
  return {std::move(site_new), std::move(global_new)};
}

/// Composite convergence test on the global natural parameters: max of the
/// relative change in r, the relative Frobenius change in Q, and (when both
/// parameter sets are positive definite) the symmetric KL divergence between
/// the implied Gaussians, compared against tol.
inline bool converged(const NaturalParams& prev, const NaturalParams& curr,
                      double tol) {
  if (prev.dim() != curr.dim()) throw Error("converged: dimension mismatch");
  const double dr = (curr.r - prev.r).norm() / (1.0 + prev.r.norm());
  const double dq = (curr.Q - prev.Q).norm() / (1.0 + prev.Q.norm());
  double crit = std::max(dr, dq);
  if (is_positive_definite(prev.Q) && is_positive_definite(curr.Q)) {
    const MomentParams mp = to_moments(prev);
    const MomentParams mc = to_moments(curr);
    crit = std::max(crit, kl_gaussian(mp, mc) + kl_gaussian(mc, mp));
  }
  return crit < tol;
}

/// Hybrid-moment provider interface. estimate() may be called concurrently
/// for distinct sites within a block; begin_pass() runs single-threaded
/// before each pass (recycling uses it for ESS-triggered pool refresh).
class MomentEstimator {
 public:
  virtual ~MomentEstimator() = default;

  /// Returns true when the pass-start hook refreshed internal state (e.g. a
  /// recycling pool); purely informational.
  virtual bool begin_pass(int /*pass*/, const EPState& /*state*/) {
    return false;
  }

  /// Hybrid moments for site i. cavity_nat is global - site_i at the block
  /// snapshot (guaranteed positive definite by the engine); cavity is the
  /// same distribution in moment form. rng_key derives only from
  /// (seed, pass, site), never from thread scheduling.
  virtual HybridMomentEstimate estimate(int site, int pass,
                                        const NaturalParams& cavity_nat,
                                        const MomentParams& cavity,
                                        std::uint64_t rng_key) = 0;
};

/// Exact provider for models whose likelihood factors are Gaussian in theta:
/// hybrid = cavity + factor in natural parameters. Used by tests and oracle
/// comparisons; one sequential pass is exact for such models.
class ExactFactorEstimator : public MomentEstimator {
 public:
  explicit ExactFactorEstimator(std::vector<NaturalParams> factors)
      : factors_(std::move(factors)) {}

  HybridMomentEstimate estimate(int site, int /*pass*/,
                                const NaturalParams& cavity_nat,
                                const MomentParams& /*cavity*/,
                                std::uint64_t /*rng_key*/) override {
    const NaturalParams& f = factors_.at(static_cast<std::size_t>(site - 1));
    const MomentParams hybrid = to_moments(add(cavity_nat, f));
    HybridMomentEstimate est;
    est.Z_hat = 1.0;
    est.mu_h = hybrid.mu;
    est.Sigma_h = hybrid.Sigma;
    // One analytic evaluation stands in for a simulation batch; pair with
    // policy.min_accept = 1.
    est.n_accepted = est.n_simulated = 1;
    return est;
  }

 private:
  std::vector<NaturalParams> factors_;
};

enum class SkipReason {
  None,
  CavityNotPositiveDefinite,
  EstimateNotPositiveDefinite,
  TooFewAcceptances,
  DegenerateWeights,
};

inline const char* skip_reason_label(SkipReason r) {
  switch (r) {
    case SkipReason::None: return "";
    case SkipReason::CavityNotPositiveDefinite: return "cavity_not_pd";
    case SkipReason::EstimateNotPositiveDefinite: return "estimate_not_pd";
    case SkipReason::TooFewAcceptances: return "too_few_acceptances";
    case SkipReason::DegenerateWeights: return "degenerate_weights";
  }
  return "";
}

/// One attempted site update. global_mu/global_Sigma snapshot the global
/// approximation after the block boundary that finalized this update; they
/// are NaN when that global is not positive definite (possible transiently
/// under wide parallel blocks). wall_ms is wall-clock and deliberately
/// excluded from persisted outputs to keep files byte-reproducible.
struct UpdateRecord {
  int pass = 0;
  int site = 0;
  bool skipped = false;
  SkipReason reason = SkipReason::None;
  double Z_hat = std::numeric_limits<double>::quiet_NaN();
  long n_accepted = 0;
  long n_simulated = 0;
  Eigen::VectorXd global_mu;
  Eigen::MatrixXd global_Sigma;
  double wall_ms = 0.0;
};

/// Full run result: execution-ordered records, the final state, convergence
/// flag, and aggregate counters.
struct EPTrace {
  std::vector<UpdateRecord> records;
  EPState final_state;
  bool converged = false;
  int passes_run = 0;
  long total_simulated = 0;
  int pool_refreshes = 0;
};

namespace detail {

inline int max_workers() {
  if (const char* env = std::getenv("EPABC_MAX_WORKERS")) {
    const long v = std::strtol(env, nullptr, 10);
    if (v >= 1) return static_cast<int>(v);
  }
  const unsigned hw = std::thread::hardware_concurrency();
  return hw == 0 ? 1 : static_cast<int>(hw);
}

struct PendingUpdate {
  bool success = false;
  SkipReason reason = SkipReason::None;
  NaturalParams new_site;
  HybridMomentEstimate est;
  bool have_est = false;
  double wall_ms = 0.0;
  std::exception_ptr error;
};

}  // namespace detail

/// Runs EP to convergence or the pass budget. All schedules execute through
/// one block loop: blocks of `width` consecutive site indices covering
/// 0..n in order; within a block every site update reads the same immutable
/// snapshot of the state, and the global is refreshed as the sum of sites at
/// each block boundary. Site 0 (the prior) occupies its slot in block
/// arithmetic but is never updated and produces no trace record, so every
/// pass contributes exactly n records. Throws AllSitesSkipped when a full
/// pass produces no successful update.
inline EPTrace run(const ModelSpec& model, MomentEstimator& estimator,
                   const Schedule& schedule, const UpdatePolicy& policy,
                   std::uint64_t seed) {
  policy.validate();
  const int n = model.n_chunks;
  if (n < 1) throw Error("run: model must have n >= 1 chunks");
  if (!is_positive_definite(model.prior.Q)) {
    throw NotPositiveDefinite("run: prior precision is not positive definite");
  }

  EPTrace trace;
  EPState state = EPState::init(model.prior, n);
  const int n_total = n + 1;
  const int width = schedule.block_width(n_total);
  const int workers_cap = detail::max_workers();

  for (int pass = 1; pass <= policy.max_passes; ++pass) {
    if (estimator.begin_pass(pass, state)) ++trace.pool_refreshes;
    const NaturalParams pass_start_global = state.global;
    bool pass_any_success = false;

    for (int block_start = 0; block_start < n_total; block_start += width) {
      const int block_end = std::min(block_start + width, n_total);
      std::vector<int> todo;
      for (int i = std::max(block_start, 1); i < block_end; ++i) {
        todo.push_back(i);
      }
      if (todo.empty()) continue;

      std::vector<detail::PendingUpdate> pending(todo.size());
      const EPState& snapshot = state;  // immutable during the block

      auto process = [&](std::size_t j) {
        const int i = todo[j];
        detail::PendingUpdate& out = pending[j];
        const auto t0 = std::chrono::steady_clock::now();
        try {
          const NaturalParams cav_nat =
              cavity(snapshot.global,
                     snapshot.sites[static_cast<std::size_t>(i)]);
          if (!is_positive_definite(cav_nat.Q)) {
            out.reason = SkipReason::CavityNotPositiveDefinite;
          } else {
            const MomentParams cav = to_moments(cav_nat);
            const std::uint64_t key = hash_key(
                {seed, static_cast<std::uint64_t>(pass),
                 static_cast<std::uint64_t>(i)});
            try {
              out.est = estimator.estimate(i, pass, cav_nat, cav, key);
              out.have_est = true;
              auto [site_new, global_new] =
                  site_update(i, out.est, snapshot, policy);
              (void)global_new;  // re-derived at the block boundary
              out.new_site = std::move(site_new);
              out.success = true;
            } catch (const DegenerateEstimate&) {
              out.reason = SkipReason::TooFewAcceptances;
            } catch (const DegenerateWeights&) {
              out.reason = SkipReason::DegenerateWeights;
            } catch (const NotPositiveDefinite&) {
              out.reason = SkipReason::EstimateNotPositiveDefinite;
            }
          }
        } catch (...) {
          out.error = std::current_exception();
        }
        const auto t1 = std::chrono::steady_clock::now();
        out.wall_ms =
            std::chrono::duration<double, std::milli>(t1 - t0).count();
      };

      const int n_workers =
          std::min<int>(workers_cap, static_cast<int>(todo.size()));
      if (n_workers <= 1) {
        for (std::size_t j = 0; j < todo.size(); ++j) process(j);
      } else {
        std::vector<std::thread> pool_threads;
        pool_threads.reserve(static_cast<std::size_t>(n_workers));
        for (int w = 0; w < n_workers; ++w) {
          pool_threads.emplace_back([&, w]() {
            for (std::size_t j = static_cast<std::size_t>(w); j < todo.size();
                 j += static_cast<std::size_t>(n_workers)) {
              process(j);
            }
          });
        }
        for (auto& t : pool_threads) t.join();
      }

      // Block boundary: apply successful updates in site order, rethrow the
      // first unexpected error deterministically, refresh the global as the
      // sum of sites, and finalize this block's records.
      for (std::size_t j = 0; j < todo.size(); ++j) {
        if (pending[j].error) std::rethrow_exception(pending[j].error);
      }
      for (std::size_t j = 0; j < todo.size(); ++j) {
        if (pending[j].success) {
          state.sites[static_cast<std::size_t>(todo[j])] =
              pending[j].new_site;
          pass_any_success = true;
        }
      }
      state.refresh_global();

      Eigen::VectorXd snap_mu = Eigen::VectorXd::Constant(
          state.global.dim(), std::numeric_limits<double>::quiet_NaN());
      Eigen::MatrixXd snap_sigma = Eigen::MatrixXd::Constant(
          state.global.dim(), state.global.dim(),
          std::numeric_limits<double>::quiet_NaN());
      if (is_positive_definite(state.global.Q)) {
        const MomentParams g = to_moments(state.global);
        snap_mu = g.mu;
        snap_sigma = g.Sigma;
      }

      for (std::size_t j = 0; j < todo.size(); ++j) {
        const detail::PendingUpdate& p = pending[j];
        UpdateRecord rec;
        rec.pass = pass;
        rec.site = todo[j];
        rec.skipped = !p.success;
        rec.reason = p.reason;
        if (p.have_est) {
          rec.Z_hat = p.est.Z_hat;
          rec.n_accepted = p.est.n_accepted;
          rec.n_simulated = p.est.n_simulated;
        }
        rec.global_mu = snap_mu;
        rec.global_Sigma = snap_sigma;
        rec.wall_ms = p.wall_ms;
        trace.total_simulated += rec.n_simulated;
        trace.records.push_back(std::move(rec));
      }
    }

    trace.passes_run = pass;
    if (!pass_any_success) {
      throw AllSitesSkipped("run: pass " + std::to_string(pass) +
                            " produced no successful site update");
    }
    if (converged(pass_start_global, state.global, policy.convergence_tol) &&
        is_positive_definite(state.global.Q)) {
      trace.converged = true;
      break;
    }
  }

  trace.final_state = std::move(state);
  return trace;
}

}  // namespace epabc

#endif  // EPABC_EP_HPP
