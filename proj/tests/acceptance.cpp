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

// Acceptance gate. Each criterion prints exactly one PASS/FAIL line; the
// binary exits nonzero if any criterion fails. Criteria are end-to-end
// statistical and consistency checks against independently computable
// oracles (conjugate posteriors, analytic identities, distributional laws).

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <functional>
#include <iomanip>
#include <iostream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "epabc/epabc.hpp"

using namespace epabc;

namespace {

double now_seconds() {
  using clock = std::chrono::steady_clock;
  static const clock::time_point t0 = clock::now();
  return std::chrono::duration<double>(clock::now() - t0).count();
}

std::string fmt(double v, int prec = 3) {
  std::ostringstream ss;
  ss << std::setprecision(prec) << v;
  return ss.str();
}

bool nan_aware_equal(double a, double b) {
  if (std::isnan(a) && std::isnan(b)) return true;
  return a == b;
}

bool nan_aware_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
      if (!nan_aware_equal(a(i, j), b(i, j))) return false;
    }
  }
  return true;
}

std::vector<double> synthetic_normal(long n, double mean, std::uint64_t key) {
  Xoshiro256 rng(key);
  std::vector<double> y(static_cast<std::size_t>(n));
  for (auto& v : y) v = mean + rng.normal();
  return y;
}

// ---------------------------------------------------------------------------
// A1: on the conjugate GaussMean model with identity local summaries, the
// engine recovers the closed-form posterior up to epsilon- and Monte-Carlo
// error: mean within 0.1 posterior sd, variance within 15% relative.
bool a1_conjugate_recovery(std::string& detail) {
  const double t0 = now_seconds();
  const std::vector<double> y = synthetic_normal(50, 1.0, hash_key({101}));
  const MomentParams prior(Eigen::VectorXd::Zero(1),
                           Eigen::MatrixXd::Identity(1, 1));
  const ModelSpec model = make_gauss_mean_model(y, prior, /*model_seed=*/7);

  AbcConfig abc;
  abc.epsilon = 0.05;
  abc.m_target = 500;
  abc.m_max = 1 << 20;
  abc.use_qmc = true;

  // At 500 accepted draws per update the tilted-moment noise is large, so
  // heavy damping plus a long pass budget is what averages it away; the
  // min_accept floor turns the occasional starved update into a skip
  // instead of a noise injection.
  UpdatePolicy pol;
  pol.alpha = 0.05;
  pol.max_passes = 80;
  pol.min_accept = 100;
  pol.convergence_tol = 1e-4;

  RejectionEstimator est(model, abc);
  const EPTrace tr =
      run(model, est, Schedule::sequential(), pol, /*seed=*/11);
  if (!is_positive_definite(tr.final_state.global.Q)) {
    detail = "final precision not positive definite";
    return false;
  }
  const MomentParams post = to_moments(tr.final_state.global);
  const MomentParams oracle = gauss_mean_exact_posterior(prior, y);
  const double sd = std::sqrt(oracle.Sigma(0, 0));
  const double mean_err = std::fabs(post.mu(0) - oracle.mu(0)) / sd;
  const double var_err =
      std::fabs(post.Sigma(0, 0) - oracle.Sigma(0, 0)) / oracle.Sigma(0, 0);
  const double secs = now_seconds() - t0;
  detail = "mean err " + fmt(mean_err) + " sd (<=0.1), var rel err " +
           fmt(var_err) + " (<=0.15), " + fmt(secs) + " s (<60)";
  return mean_err <= 0.1 && var_err <= 0.15 && secs < 60.0;
}

// ---------------------------------------------------------------------------
// A2: with analytically exact hybrid moments for Gaussian factors, one
// sequential pass reproduces the conjugate posterior to 1e-8 and a second
// pass is a fixed point to 1e-10.
bool a2_gaussian_exactness(std::string& detail) {
  const std::vector<double> y = {0.3, -1.2, 2.0, 0.7, 1.1, -0.4, 0.05, 1.9};
  const MomentParams prior(Eigen::VectorXd::Zero(1),
                           Eigen::MatrixXd::Identity(1, 1));
  const ModelSpec model = make_gauss_mean_model(y, prior, 1);

  std::vector<NaturalParams> factors;
  for (double v : y) {
    factors.emplace_back(Eigen::VectorXd::Constant(1, v),
                         Eigen::MatrixXd::Identity(1, 1));
  }
  ExactFactorEstimator est(factors);

  UpdatePolicy pol;
  pol.alpha = 1.0;
  pol.min_accept = 1;
  pol.convergence_tol = 1e-300;  // never stop early; pass count is the knob

  pol.max_passes = 1;
  const EPTrace one = run(model, est, Schedule::sequential(), pol, 1);
  pol.max_passes = 2;
  const EPTrace two = run(model, est, Schedule::sequential(), pol, 1);

  const MomentParams post = to_moments(one.final_state.global);
  const MomentParams oracle = gauss_mean_exact_posterior(prior, y);
  const double pass1_err =
      std::max(std::fabs(post.mu(0) - oracle.mu(0)),
               std::fabs(post.Sigma(0, 0) - oracle.Sigma(0, 0)));
  const double drift = std::max(
      (two.final_state.global.r - one.final_state.global.r)
          .cwiseAbs()
          .maxCoeff(),
      (two.final_state.global.Q - one.final_state.global.Q)
          .cwiseAbs()
          .maxCoeff());
  detail = "pass-1 err " + fmt(pass1_err) + " (<=1e-8), pass-2 drift " +
           fmt(drift) + " (<=1e-10)";
  return pass1_err <= 1e-8 && drift <= 1e-10;
}

// ---------------------------------------------------------------------------
// A3: BlockParallel(1) is Sequential and BlockParallel(n+1) is Parallel,
// trace-identical under a fixed seed.
bool traces_identical(const EPTrace& a, const EPTrace& b) {
  if (a.records.size() != b.records.size()) return false;
  if (a.converged != b.converged || a.passes_run != b.passes_run ||
      a.total_simulated != b.total_simulated) {
    return false;
  }
  for (std::size_t k = 0; k < a.records.size(); ++k) {
    const UpdateRecord& ra = a.records[k];
    const UpdateRecord& rb = b.records[k];
    if (ra.pass != rb.pass || ra.site != rb.site ||
        ra.skipped != rb.skipped || ra.reason != rb.reason ||
        ra.n_accepted != rb.n_accepted ||
        ra.n_simulated != rb.n_simulated ||
        !nan_aware_equal(ra.Z_hat, rb.Z_hat) ||
        !nan_aware_equal(Eigen::MatrixXd(ra.global_mu),
                         Eigen::MatrixXd(rb.global_mu)) ||
        !nan_aware_equal(ra.global_Sigma, rb.global_Sigma)) {
      return false;
    }
  }
  return (a.final_state.global.r.array() == b.final_state.global.r.array())
             .all() &&
         (a.final_state.global.Q.array() == b.final_state.global.Q.array())
             .all();
}

bool a3_schedule_degeneracies(std::string& detail) {
  const std::vector<double> y = synthetic_normal(6, 0.5, hash_key({303}));
  const MomentParams prior(Eigen::VectorXd::Zero(1),
                           Eigen::MatrixXd::Identity(1, 1));
  const ModelSpec model = make_gauss_mean_model(y, prior, 3);

  AbcConfig abc;
  abc.epsilon = 0.5;
  abc.m_target = 200;
  abc.m_max = 8192;

  UpdatePolicy pol;
  pol.alpha = 0.7;
  pol.max_passes = 3;
  pol.convergence_tol = 1e-300;  // run all passes in every configuration

  auto trace_for = [&](const Schedule& s) {
    RejectionEstimator est(model, abc);
    return run(model, est, s, pol, /*seed=*/5);
  };
  const bool seq_ok = traces_identical(trace_for(Schedule::sequential()),
                                       trace_for(Schedule::block_parallel(1)));
  const bool par_ok = traces_identical(
      trace_for(Schedule::parallel()),
      trace_for(Schedule::block_parallel(model.n_chunks + 1)));
  detail = std::string("block(1)==sequential: ") + (seq_ok ? "yes" : "NO") +
           ", block(n+1)==parallel: " + (par_ok ? "yes" : "NO");
  return seq_ok && par_ok;
}

// ---------------------------------------------------------------------------
// A4: the damped update at alpha=1 matches the undamped moment-matching
// update bit-for-bit; at alpha=0.5 it is the natural-parameter midpoint.
bool a4_fractional_updates(std::string& detail) {
  Xoshiro256 rng(hash_key({404}));
  const int dim = 2;
  UpdatePolicy full;
  full.alpha = 1.0;
  UpdatePolicy half;
  half.alpha = 0.5;

  auto random_spd = [&]() {
    Eigen::MatrixXd a(dim, dim);
    for (int i = 0; i < dim; ++i) {
      for (int j = 0; j < dim; ++j) a(i, j) = rng.normal();
    }
    return Eigen::MatrixXd(a.transpose() * a +
                           Eigen::MatrixXd::Identity(dim, dim));
  };
  auto random_vec = [&]() {
    Eigen::VectorXd v(dim);
    for (int i = 0; i < dim; ++i) v[i] = rng.normal();
    return v;
  };

  double worst_mid = 0.0;
  for (int rep = 0; rep < 200; ++rep) {
    EPState st;
    st.sites = {NaturalParams(random_vec(), random_spd()),
                NaturalParams(random_vec(), random_spd())};
    st.global = NaturalParams(random_vec(), random_spd());

    HybridMomentEstimate est;
    est.mu_h = random_vec();
    est.Sigma_h = random_spd();
    est.Z_hat = 1.0;
    est.n_accepted = est.n_simulated = 100;

    const NaturalParams tilted =
        to_natural(MomentParams(est.mu_h, est.Sigma_h));
    const auto [site_full, global_full] = site_update(1, est, st, full);

    // undamped update computed independently of site_update
    const NaturalParams undamped_site(
        st.sites[1].r + tilted.r - st.global.r,
        st.sites[1].Q + tilted.Q - st.global.Q);
    const bool bitwise =
        (global_full.r.array() == tilted.r.array()).all() &&
        (global_full.Q.array() == tilted.Q.array()).all() &&
        (site_full.r.array() == undamped_site.r.array()).all() &&
        (site_full.Q.array() == undamped_site.Q.array()).all();
    if (!bitwise) {
      detail = "alpha=1 deviates from the undamped update at rep " +
               std::to_string(rep);
      return false;
    }

    const auto [site_half, global_half] = site_update(1, est, st, half);
    const Eigen::VectorXd mid_r = 0.5 * (tilted.r + st.global.r);
    const Eigen::MatrixXd mid_q = 0.5 * (tilted.Q + st.global.Q);
    double err = std::max((global_half.r - mid_r).cwiseAbs().maxCoeff(),
                          (global_half.Q - mid_q).cwiseAbs().maxCoeff());
    // the site must absorb exactly the global's move (sum invariant)
    err = std::max(
        err, ((site_half.r - st.sites[1].r) - (global_half.r - st.global.r))
                 .cwiseAbs()
                 .maxCoeff());
    err = std::max(
        err, ((site_half.Q - st.sites[1].Q) - (global_half.Q - st.global.Q))
                 .cwiseAbs()
                 .maxCoeff());
    worst_mid = std::max(worst_mid, err);
  }
  detail = "alpha=1 bitwise over 200 cases; alpha=0.5 midpoint err " +
           fmt(worst_mid) + " (<=1e-12)";
  return worst_mid <= 1e-12;
}

// ---------------------------------------------------------------------------
// A5: synthetic spatial-extremes run. Sequential and BlockParallel(10)
// posterior means of (log nu, log c) after 5 passes agree within 0.15 per
// coordinate for each of 3 seeds; epsilon comes from a pilot calibration.
bool a5_extremes_schedules(std::string& detail) {
  const double t0 = now_seconds();
  const StationLayout layout = make_synthetic_layout(10, 20.0, 99);
  const CorrelationModel truth{std::log(8.0), std::log(4.0)};
  const MaxStableConfig mcfg;  // spike_cap 10^4, tail_factor 5
  const Eigen::MatrixXd data =
      simulate_maxstable_dataset(layout, truth, mcfg, 2024, 47);

  Eigen::VectorXd prior_mu(2);
  prior_mu << 2.0, 1.2;
  const MomentParams prior(prior_mu, 0.5 * Eigen::MatrixXd::Identity(2, 2));
  const ModelSpec model = make_maxstable_model(layout, data, prior, mcfg, 31);

  // pilot from the prior proposal, then quantile calibration
  AbcConfig pilot;
  pilot.epsilon = std::numeric_limits<double>::infinity();
  pilot.m_target = pilot.m_max = 2048;
  RejectionEstimator pest(model, pilot);
  const MomentParams prior_m = to_moments(model.prior);
  for (int site = 1; site <= model.n_chunks; ++site) {
    pest.estimate(site, 1, model.prior, prior_m,
                  hash_key({555, static_cast<std::uint64_t>(site)}));
  }
  const double eps = calibrate_epsilon(pest.last_records(), 0.05);

  AbcConfig abc;
  abc.epsilon = eps;
  abc.m_target = 300;
  abc.m_max = 16384;

  UpdatePolicy pol;
  pol.alpha = 0.5;
  pol.max_passes = 5;
  pol.convergence_tol = 1e-300;  // always run the full 5 passes

  double worst_gap = 0.0;
  for (std::uint64_t seed : {1ULL, 2ULL, 3ULL}) {
    auto posterior_mean = [&](const Schedule& s) {
      RejectionEstimator est(model, abc);
      const EPTrace tr = run(model, est, s, pol, seed);
      if (!is_positive_definite(tr.final_state.global.Q)) {
        throw Error("a5: final precision not positive definite");
      }
      return Eigen::VectorXd(to_moments(tr.final_state.global).mu);
    };
    const Eigen::VectorXd mu_seq = posterior_mean(Schedule::sequential());
    const Eigen::VectorXd mu_bp = posterior_mean(Schedule::block_parallel(10));
    worst_gap =
        std::max(worst_gap, (mu_seq - mu_bp).cwiseAbs().maxCoeff());
  }
  const double secs = now_seconds() - t0;
  detail = "eps " + fmt(eps) + ", worst coordinate gap " + fmt(worst_gap) +
           " (<=0.15), " + fmt(secs) + " s (<900)";
  return worst_gap <= 0.15 && secs < 900.0;
}

// ---------------------------------------------------------------------------
// A6: the nu=1/2 correlation curve is exp(-h/c) to 1e-8 relative over
// h/c in [1e-6, 50].
bool a6_matern_identity(std::string& detail) {
  double worst = 0.0;
  for (double c : {0.5, 2.0, 4.0}) {
    for (int t = 0; t < 400; ++t) {
      const double f = static_cast<double>(t) / 399.0;
      const double z =
          std::exp(std::log(1e-6) + f * (std::log(50.0) - std::log(1e-6)));
      const double expect = std::exp(-z);
      const double got = whittle_matern(z * c, 0.5, c);
      worst = std::max(worst, std::fabs(got - expect) / expect);
    }
  }
  detail = "worst relative error " + fmt(worst) + " (<=1e-8)";
  return worst <= 1e-8;
}

// ---------------------------------------------------------------------------
// A7: single-station marginals are unit Frechet: KS distance below 0.02 on
// 10^4 draws and median within 0.1 of 1/ln 2.
bool a7_frechet_marginal(std::string& detail) {
  const StationLayout layout =
      StationLayout::from_coords(Eigen::MatrixXd::Zero(1, 2));
  const CorrelationModel corr{std::log(8.0), std::log(4.0)};
  MaxStableConfig cfg;
  cfg.tail_factor = 5.0;

  const int n = 10000;
  std::vector<double> draws(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    draws[static_cast<std::size_t>(i)] = simulate_maxstable(
        layout, corr, cfg, 777, static_cast<std::uint64_t>(i))[0];
  }
  std::sort(draws.begin(), draws.end());

  double ks = 0.0;
  for (int i = 0; i < n; ++i) {
    const double F = std::exp(-1.0 / draws[static_cast<std::size_t>(i)]);
    const double lo = static_cast<double>(i) / n;
    const double hi = static_cast<double>(i + 1) / n;
    ks = std::max({ks, std::fabs(F - lo), std::fabs(F - hi)});
  }
  const double median = 0.5 * (draws[4999] + draws[5000]);
  const double med_err = std::fabs(median - 1.0 / std::log(2.0));
  detail = "KS " + fmt(ks) + " (<0.02), median err " + fmt(med_err) +
           " (<=0.1)";
  return ks < 0.02 && med_err <= 0.1;
}

// ---------------------------------------------------------------------------
// A8: recycled parallel passes agree with direct per-site estimation within
// 3 combined Monte Carlo standard errors (4 seeds estimate the SEs); ESS
// stays in [1, M] and the pool refreshes at ess_threshold = 0.9.
bool a8_recycling_consistency(std::string& detail) {
  const std::vector<double> y = synthetic_normal(20, 0.5, hash_key({808}));
  const MomentParams prior(Eigen::VectorXd::Zero(1),
                           Eigen::MatrixXd::Identity(1, 1));
  const ModelSpec model = make_gauss_mean_model(y, prior, 13);

  const long big_m = 100000;
  AbcConfig abc;
  abc.epsilon = 0.3;
  abc.m_target = abc.m_max = big_m;  // equal fixed budget per estimate
  abc.use_qmc = false;  // pseudo-random, so seeds give honest MC replicates

  UpdatePolicy pol;
  pol.alpha = 0.5;
  pol.max_passes = 4;
  pol.convergence_tol = 1e-300;

  const std::vector<std::uint64_t> seeds = {21, 22, 23, 24};
  std::vector<double> dir_means, rec_means;
  int min_refreshes = std::numeric_limits<int>::max();
  for (std::uint64_t s : seeds) {
    RejectionEstimator direct(model, abc);
    const EPTrace td = run(model, direct, Schedule::parallel(), pol, s);
    dir_means.push_back(to_moments(td.final_state.global).mu(0));

    RecyclingEstimator rec(model, abc, big_m, /*ess_threshold=*/0.9, s);
    const EPTrace tr = run(model, rec, Schedule::parallel(), pol, s);
    rec_means.push_back(to_moments(tr.final_state.global).mu(0));
    min_refreshes = std::min(min_refreshes, tr.pool_refreshes);
  }

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
  };
  auto var_of = [&](const std::vector<double>& v) {
    const double m = mean_of(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return s / static_cast<double>(v.size() - 1);
  };
  const double diff = std::fabs(mean_of(rec_means) - mean_of(dir_means));
  const double se = std::sqrt((var_of(rec_means) + var_of(dir_means)) /
                              static_cast<double>(seeds.size()));

  // ESS bounds on a real pool against targets of varying disagreement
  const RecyclePool pool = make_recycle_pool(
      model, prior, big_m, /*use_qmc=*/false, 0.9, hash_key({8081}));
  bool ess_ok = true;
  const double ess_same = effective_sample_size(pool, prior);
  ess_ok = ess_ok && ess_same >= 1.0 &&
           ess_same <= static_cast<double>(big_m) + 1e-9 &&
           std::fabs(ess_same - static_cast<double>(big_m)) < 1e-6;
  for (double shift : {0.3, 1.0, 3.0}) {
    const MomentParams target(Eigen::VectorXd::Constant(1, shift),
                              Eigen::MatrixXd::Constant(1, 1, 0.7));
    const double e = effective_sample_size(pool, target);
    ess_ok = ess_ok && e >= 1.0 && e <= static_cast<double>(big_m) + 1e-9;
  }

  detail = "|recycled-direct| " + fmt(diff) + " vs 3*SE " + fmt(3.0 * se) +
           ", min refreshes/run " + std::to_string(min_refreshes) +
           " (>=1), ESS in [1,M]: " + (ess_ok ? "yes" : "NO");
  return diff <= 3.0 * se && min_refreshes >= 1 && ess_ok;
}

// ---------------------------------------------------------------------------
// A9: at a fixed budget M=4096, the QMC proposal stream estimates hybrid
// means with RMSE no worse than the pseudo-random stream. With an infinite
// tolerance the hybrid equals the proposal, whose mean is known exactly, so
// the comparison isolates quadrature error.
bool a9_qmc_vs_prng(std::string& detail) {
  const std::vector<double> y = {0.0};
  const MomentParams prior(Eigen::VectorXd::Zero(1),
                           Eigen::MatrixXd::Identity(1, 1));
  const ModelSpec model = make_gauss_mean_model(y, prior, 17);

  AbcConfig cfg;
  cfg.epsilon = std::numeric_limits<double>::infinity();
  cfg.m_target = cfg.m_max = 4096;

  Xoshiro256 gen(hash_key({909}));
  double sq_qmc = 0.0;
  double sq_prng = 0.0;
  const int reps = 50;
  for (int rep = 0; rep < reps; ++rep) {
    const double mu = 2.0 * gen.uniform() - 1.0;
    const double sd = 0.5 + gen.uniform();
    const MomentParams proposal(Eigen::VectorXd::Constant(1, mu),
                                Eigen::MatrixXd::Constant(1, 1, sd * sd));
    cfg.use_qmc = true;
    const HybridMomentEstimate eq = estimate_site_moments(
        1, proposal, model, cfg,
        hash_key({1000, static_cast<std::uint64_t>(rep)}));
    cfg.use_qmc = false;
    const HybridMomentEstimate ep = estimate_site_moments(
        1, proposal, model, cfg,
        hash_key({2000, static_cast<std::uint64_t>(rep)}));
    sq_qmc += (eq.mu_h(0) - mu) * (eq.mu_h(0) - mu);
    sq_prng += (ep.mu_h(0) - mu) * (ep.mu_h(0) - mu);
  }
  const double rmse_qmc = std::sqrt(sq_qmc / reps);
  const double rmse_prng = std::sqrt(sq_prng / reps);
  detail = "RMSE qmc " + fmt(rmse_qmc) + " vs prng " + fmt(rmse_prng);
  return rmse_qmc <= rmse_prng;
}

// ---------------------------------------------------------------------------
// A10: the correlation-distance surface against reference (8, 4) vanishes at
// the reference, is nonnegative, and has a near-zero valley along some
// non-reference smoothness row (the two parameters trade off).
bool a10_heatmap_valley(std::string& detail) {
  auto logspace = [](double lo, double hi, int count) {
    std::vector<double> v(static_cast<std::size_t>(count));
    for (int t = 0; t < count; ++t) {
      if (t == 0) {
        v[static_cast<std::size_t>(t)] = lo;
      } else if (t == count - 1) {
        v[static_cast<std::size_t>(t)] = hi;
      } else {
        const double f = static_cast<double>(t) / (count - 1);
        v[static_cast<std::size_t>(t)] =
            std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)));
      }
    }
    return v;
  };
  auto snap_to = [](std::vector<double>& v, double target) {
    std::size_t best = 0;
    for (std::size_t t = 1; t < v.size(); ++t) {
      if (std::fabs(std::log(v[t] / target)) <
          std::fabs(std::log(v[best] / target))) {
        best = t;
      }
    }
    v[best] = target;  // grid contains the reference node exactly
    return best;
  };

  std::vector<double> nus = logspace(1.0, 16.0, 20);
  std::vector<double> cs = logspace(0.5, 12.0, 20);
  const std::size_t ref_row = snap_to(nus, 8.0);
  const std::size_t ref_col = snap_to(cs, 4.0);

  const Eigen::MatrixXd grid =
      correlation_distance_grid(nus, cs, 8.0, 4.0, /*h_max=*/30.0,
                                /*n_quad=*/256);

  const bool zero_at_ref =
      grid(static_cast<Eigen::Index>(ref_row),
           static_cast<Eigen::Index>(ref_col)) == 0.0;
  const bool nonneg = (grid.array() >= 0.0).all();

  int valley_rows = 0;
  for (Eigen::Index a = 0; a < grid.rows(); ++a) {
    if (a == static_cast<Eigen::Index>(ref_row)) continue;
    const double lo = grid.row(a).minCoeff();
    const double hi = grid.row(a).maxCoeff();
    if (hi > 0.0 && lo < 0.05 * hi) ++valley_rows;
  }
  detail = std::string("zero at reference: ") + (zero_at_ref ? "yes" : "NO") +
           ", nonnegative: " + (nonneg ? "yes" : "NO") +
           ", valley rows " + std::to_string(valley_rows) + " (>=1)";
  return zero_at_ref && nonneg && valley_rows >= 1;
}

}  // namespace

int main() {
  // Pin the worker budget for reproducible, host-independent timings.
  setenv("EPABC_MAX_WORKERS", "4", 1);

  struct Criterion {
    const char* id;
    const char* label;
    std::function<bool(std::string&)> fn;
  };
  const std::vector<Criterion> criteria = {
      {"A1", "conjugate-oracle recovery", a1_conjugate_recovery},
      {"A2", "Gaussian-site exactness", a2_gaussian_exactness},
      {"A3", "schedule degeneracies", a3_schedule_degeneracies},
      {"A4", "fractional-update consistency", a4_fractional_updates},
      {"A5", "extremes schedule agreement", a5_extremes_schedules},
      {"A6", "Whittle-Matern nu=1/2 identity", a6_matern_identity},
      {"A7", "unit Frechet marginal", a7_frechet_marginal},
      {"A8", "recycling consistency", a8_recycling_consistency},
      {"A9", "QMC vs pseudo-random RMSE", a9_qmc_vs_prng},
      {"A10", "correlation-distance valley", a10_heatmap_valley},
  };

  int failures = 0;
  for (const Criterion& c : criteria) {
    std::string detail;
    bool ok = false;
    try {
      ok = c.fn(detail);
    } catch (const std::exception& e) {
      detail = std::string("exception: ") + e.what();
    }
    if (!ok) ++failures;
    std::cout << c.id << " " << c.label << ": " << (ok ? "PASS" : "FAIL")
              << (detail.empty() ? "" : " (" + detail + ")") << "\n";
  }
  return failures == 0 ? 0 : 1;
}
