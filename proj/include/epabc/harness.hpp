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

#ifndef EPABC_HARNESS_HPP
#define EPABC_HARNESS_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "epabc/abc.hpp"
#include "epabc/ep.hpp"
#include "epabc/errors.hpp"
#include "epabc/extremes.hpp"
#include "epabc/io.hpp"
#include "epabc/model.hpp"

namespace epabc {

using json = nlohmann::json;

namespace cfgdetail {

inline std::string joinpath(const std::string& base, const std::string& key) {
  return base.empty() ? key : base + "." + key;
}

inline void require_object(const json& j, const std::string& path) {
  if (!j.is_object()) {
    throw ConfigError(path, "expected an object");
  }
}

/// Unknown keys are errors: they catch typos in epsilon-like fields.
inline void check_keys(const json& j, const std::string& path,
                       const std::set<std::string>& allowed) {
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (!allowed.count(it.key())) {
      throw ConfigError(joinpath(path, it.key()), "unknown key");
    }
  }
}

inline double as_double(const json& j, const std::string& path) {
  if (!j.is_number()) throw ConfigError(path, "expected a number");
  return j.get<double>();
}

inline long as_long(const json& j, const std::string& path) {
  if (!j.is_number_integer()) throw ConfigError(path, "expected an integer");
  return j.get<long>();
}

inline std::uint64_t as_seed(const json& j, const std::string& path) {
  if (!j.is_number_integer() || (j.is_number_integer() && j.get<long long>() < 0)) {
    throw ConfigError(path, "expected a nonnegative integer");
  }
  return j.get<std::uint64_t>();
}

inline bool as_bool(const json& j, const std::string& path) {
  if (!j.is_boolean()) throw ConfigError(path, "expected a boolean");
  return j.get<bool>();
}

inline std::string as_string(const json& j, const std::string& path) {
  if (!j.is_string()) throw ConfigError(path, "expected a string");
  return j.get<std::string>();
}

inline Eigen::VectorXd as_vector(const json& j, const std::string& path) {
  if (j.is_number()) {  // scalar shorthand for 1-D models
    return Eigen::VectorXd::Constant(1, j.get<double>());
  }
  if (!j.is_array()) throw ConfigError(path, "expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    v[static_cast<Eigen::Index>(i)] =
        as_double(j[i], path + "[" + std::to_string(i) + "]");
  }
  return v;
}

inline Eigen::MatrixXd as_matrix(const json& j, const std::string& path) {
  if (!j.is_array() || j.empty()) {
    throw ConfigError(path, "expected an array of rows");
  }
  const std::size_t rows = j.size();
  Eigen::MatrixXd m;
  for (std::size_t i = 0; i < rows; ++i) {
    const Eigen::VectorXd row =
        as_vector(j[i], path + "[" + std::to_string(i) + "]");
    if (i == 0) {
      m.resize(static_cast<Eigen::Index>(rows), row.size());
    } else if (row.size() != m.cols()) {
      throw ConfigError(path, "ragged matrix rows");
    }
    m.row(static_cast<Eigen::Index>(i)) = row.transpose();
  }
  return m;
}

template <typename T, typename Fn>
T get_or(const json& j, const std::string& path, const std::string& key,
         T fallback, Fn convert) {
  if (!j.contains(key)) return fallback;
  return convert(j.at(key), joinpath(path, key));
}

inline MomentParams prior_from(const json& j, const std::string& path,
                               Eigen::Index dim) {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(dim);
  Eigen::MatrixXd cov = Eigen::MatrixXd::Identity(dim, dim);
  if (j.contains("prior_mean")) {
    mu = as_vector(j.at("prior_mean"), joinpath(path, "prior_mean"));
  }
  if (j.contains("prior_cov")) {
    cov = as_matrix(j.at("prior_cov"), joinpath(path, "prior_cov"));
  }
  if (j.contains("prior_var")) {
    if (dim != 1) {
      throw ConfigError(joinpath(path, "prior_var"),
                        "prior_var is only valid for 1-D models");
    }
    cov(0, 0) = as_double(j.at("prior_var"), joinpath(path, "prior_var"));
  }
  if (mu.size() != dim || cov.rows() != dim) {
    throw ConfigError(joinpath(path, "prior_mean"),
                      "prior dimension must be " + std::to_string(dim));
  }
  try {
    return MomentParams(std::move(mu), std::move(cov));
  } catch (const NotPositiveDefinite&) {
    throw ConfigError(joinpath(path, "prior_cov"),
                      "prior covariance must be positive definite");
  }
}

}  // namespace cfgdetail

/// Builds the configured model. Referenced data files are loaded here, so a
/// missing file fails at config load with its field path.
inline ModelSpec build_model(const json& mj, const std::string& path) {
  using namespace cfgdetail;
  require_object(mj, path);
  if (!mj.contains("name")) throw ConfigError(joinpath(path, "name"), "missing");
  const std::string name = as_string(mj.at("name"), joinpath(path, "name"));
  const std::uint64_t model_seed =
      get_or<std::uint64_t>(mj, path, "model_seed", 0, as_seed);

  if (name == "gauss_mean") {
    check_keys(mj, path,
               {"name", "prior_mean", "prior_var", "prior_cov", "data_file",
                "synthetic", "model_seed"});
    const MomentParams prior = prior_from(mj, path, 1);
    std::vector<double> y;
    if (mj.contains("data_file") == mj.contains("synthetic")) {
      throw ConfigError(joinpath(path, "data_file"),
                        "provide exactly one of data_file or synthetic");
    }
    if (mj.contains("data_file")) {
      const std::string file =
          as_string(mj.at("data_file"), joinpath(path, "data_file"));
      Eigen::MatrixXd m;
      try {
        m = load_matrix(file);
      } catch (const Error& e) {
        throw ConfigError(joinpath(path, "data_file"), e.what());
      }
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) y.push_back(m(i, j));
      }
    } else {
      const json& sj = mj.at("synthetic");
      const std::string spath = joinpath(path, "synthetic");
      require_object(sj, spath);
      check_keys(sj, spath, {"n", "theta", "seed"});
      const long n = get_or<long>(sj, spath, "n", 50, as_long);
      if (n < 1) throw ConfigError(joinpath(spath, "n"), "must be >= 1");
      const double theta = get_or<double>(sj, spath, "theta", 1.0, as_double);
      const std::uint64_t dseed =
          get_or<std::uint64_t>(sj, spath, "seed", 0, as_seed);
      Xoshiro256 rng(hash_key({dseed, 0x676D64ULL /* "gmd" */}));
      for (long i = 0; i < n; ++i) y.push_back(theta + rng.normal());
    }
    return make_gauss_mean_model(y, prior, model_seed);
  }

  if (name == "ar1") {
    check_keys(mj, path,
               {"name", "prior_mean", "prior_cov", "y0", "data_file",
                "synthetic", "model_seed"});
    const MomentParams prior = prior_from(mj, path, 2);
    const double y0 = get_or<double>(mj, path, "y0", 0.0, as_double);
    std::vector<double> y;
    if (mj.contains("data_file") == mj.contains("synthetic")) {
      throw ConfigError(joinpath(path, "data_file"),
                        "provide exactly one of data_file or synthetic");
    }
    if (mj.contains("data_file")) {
      const std::string file =
          as_string(mj.at("data_file"), joinpath(path, "data_file"));
      Eigen::MatrixXd m;
      try {
        m = load_matrix(file);
      } catch (const Error& e) {
        throw ConfigError(joinpath(path, "data_file"), e.what());
      }
      for (Eigen::Index i = 0; i < m.rows(); ++i) {
        for (Eigen::Index j = 0; j < m.cols(); ++j) y.push_back(m(i, j));
      }
    } else {
      const json& sj = mj.at("synthetic");
      const std::string spath = joinpath(path, "synthetic");
      require_object(sj, spath);
      check_keys(sj, spath, {"n", "rho", "sigma", "seed"});
      const long n = get_or<long>(sj, spath, "n", 50, as_long);
      if (n < 1) throw ConfigError(joinpath(spath, "n"), "must be >= 1");
      const double rho = get_or<double>(sj, spath, "rho", 0.5, as_double);
      const double sigma = get_or<double>(sj, spath, "sigma", 1.0, as_double);
      if (!(sigma > 0.0)) {
        throw ConfigError(joinpath(spath, "sigma"), "must be > 0");
      }
      const std::uint64_t dseed =
          get_or<std::uint64_t>(sj, spath, "seed", 0, as_seed);
      Xoshiro256 rng(hash_key({dseed, 0x617231ULL /* "ar1" */}));
      double prev = y0;
      for (long i = 0; i < n; ++i) {
        prev = rho * prev + sigma * rng.normal();
        y.push_back(prev);
      }
    }
    return make_ar1_model(y, y0, prior, model_seed);
  }

  if (name == "max_stable") {
    check_keys(mj, path,
               {"name", "prior_mean", "prior_cov", "spike_cap", "tail_factor",
                "stations_file", "stations_synthetic", "data_file",
                "data_synthetic", "model_seed"});
    const MomentParams prior = prior_from(mj, path, 2);
    MaxStableConfig cfg;
    cfg.spike_cap = static_cast<int>(
        get_or<long>(mj, path, "spike_cap", cfg.spike_cap, as_long));
    cfg.tail_factor =
        get_or<double>(mj, path, "tail_factor", cfg.tail_factor, as_double);
    try {
      cfg.validate();
    } catch (const Error& e) {
      throw ConfigError(joinpath(path, "spike_cap"), e.what());
    }

    if (mj.contains("stations_file") == mj.contains("stations_synthetic")) {
      throw ConfigError(
          joinpath(path, "stations_file"),
          "provide exactly one of stations_file or stations_synthetic");
    }
    std::optional<StationLayout> layout;
    if (mj.contains("stations_file")) {
      const std::string file = as_string(mj.at("stations_file"),
                                         joinpath(path, "stations_file"));
      try {
        layout = StationLayout::from_coords(load_matrix(file));
      } catch (const Error& e) {
        throw ConfigError(joinpath(path, "stations_file"), e.what());
      }
    } else {
      const json& sj = mj.at("stations_synthetic");
      const std::string spath = joinpath(path, "stations_synthetic");
      require_object(sj, spath);
      check_keys(sj, spath, {"d", "side", "seed"});
      const long d = get_or<long>(sj, spath, "d", 10, as_long);
      const double side = get_or<double>(sj, spath, "side", 10.0, as_double);
      const std::uint64_t lseed =
          get_or<std::uint64_t>(sj, spath, "seed", 0, as_seed);
      try {
        layout = make_synthetic_layout(static_cast<int>(d), side, lseed);
      } catch (const Error& e) {
        throw ConfigError(spath, e.what());
      }
    }

    if (mj.contains("data_file") == mj.contains("data_synthetic")) {
      throw ConfigError(joinpath(path, "data_file"),
                        "provide exactly one of data_file or data_synthetic");
    }
    Eigen::MatrixXd data;
    if (mj.contains("data_file")) {
      const std::string file =
          as_string(mj.at("data_file"), joinpath(path, "data_file"));
      try {
        data = load_matrix(file);
      } catch (const Error& e) {
        throw ConfigError(joinpath(path, "data_file"), e.what());
      }
    } else {
      const json& sj = mj.at("data_synthetic");
      const std::string spath = joinpath(path, "data_synthetic");
      require_object(sj, spath);
      check_keys(sj, spath, {"n", "log_nu", "log_c", "seed"});
      const long n = get_or<long>(sj, spath, "n", 47, as_long);
      if (n < 1) throw ConfigError(joinpath(spath, "n"), "must be >= 1");
      CorrelationModel corr;
      corr.log_nu =
          get_or<double>(sj, spath, "log_nu", std::log(8.0), as_double);
      corr.log_c =
          get_or<double>(sj, spath, "log_c", std::log(4.0), as_double);
      const std::uint64_t dseed =
          get_or<std::uint64_t>(sj, spath, "seed", 0, as_seed);
      data = simulate_maxstable_dataset(*layout, corr, cfg, dseed,
                                        static_cast<int>(n));
    }
    try {
      return make_maxstable_model(*layout, data, prior, cfg, model_seed);
    } catch (const Error& e) {
      throw ConfigError(path, e.what());
    }
  }

  throw ConfigError(cfgdetail::joinpath(path, "name"),
                    "unknown model '" + name + "'");
}

/// Parsed and validated run configuration.
struct RunConfig {
  json model_json;
  double epsilon = 0.0;
  Schedule schedule = Schedule::sequential();
  double alpha = 1.0;
  long m_target = 500;
  long m_max = 100000;
  bool use_qmc = true;
  bool use_recycling = false;
  double ess_threshold = 0.5;
  int max_passes = 20;
  double convergence_tol = 1e-4;
  long min_accept = 2;
  std::uint64_t seed = 1;
  std::string output_dir;
  json echo;

  static Schedule schedule_from(const json& sj, const std::string& path) {
    using namespace cfgdetail;
    require_object(sj, path);
    check_keys(sj, path, {"kind", "n_core"});
    if (!sj.contains("kind")) {
      throw ConfigError(joinpath(path, "kind"), "missing");
    }
    const std::string kind = as_string(sj.at("kind"), joinpath(path, "kind"));
    if (kind == "sequential") return Schedule::sequential();
    if (kind == "parallel") return Schedule::parallel();
    if (kind == "block_parallel") {
      const long n_core = get_or<long>(sj, path, "n_core", 1, as_long);
      if (n_core < 1) {
        throw ConfigError(joinpath(path, "n_core"), "must be >= 1");
      }
      return Schedule::block_parallel(static_cast<int>(n_core));
    }
    throw ConfigError(joinpath(path, "kind"),
                      "must be sequential, parallel, or block_parallel");
  }

  static RunConfig from_json(const json& j, bool require_output_dir,
                             const std::set<std::string>& extra_allowed = {}) {
    using namespace cfgdetail;
    require_object(j, "");
    std::set<std::string> allowed = {
        "model",       "epsilon",       "schedule",        "alpha",
        "m_target",    "m_max",         "use_qmc",         "use_recycling",
        "ess_threshold", "max_passes",  "convergence_tol", "min_accept",
        "seed",        "output_dir"};
    allowed.insert(extra_allowed.begin(), extra_allowed.end());
    check_keys(j, "", allowed);

    RunConfig c;
    c.echo = j;
    if (!j.contains("model")) throw ConfigError("model", "missing");
    c.model_json = j.at("model");
    if (!j.contains("epsilon")) throw ConfigError("epsilon", "missing");
    c.epsilon = as_double(j.at("epsilon"), "epsilon");
    if (!(c.epsilon > 0.0)) throw ConfigError("epsilon", "must be > 0");
    if (j.contains("schedule")) {
      c.schedule = schedule_from(j.at("schedule"), "schedule");
    }
    c.alpha = get_or<double>(j, "", "alpha", c.alpha, as_double);
    if (!(c.alpha > 0.0 && c.alpha <= 1.0)) {
      throw ConfigError("alpha", "must be in (0, 1]");
    }
    c.m_target = get_or<long>(j, "", "m_target", c.m_target, as_long);
    if (c.m_target < 1) throw ConfigError("m_target", "must be >= 1");
    c.m_max = get_or<long>(j, "", "m_max", c.m_max, as_long);
    if (c.m_max < c.m_target) {
      throw ConfigError("m_max", "must be >= m_target");
    }
    c.use_qmc = get_or<bool>(j, "", "use_qmc", c.use_qmc, as_bool);
    c.use_recycling =
        get_or<bool>(j, "", "use_recycling", c.use_recycling, as_bool);
    c.ess_threshold =
        get_or<double>(j, "", "ess_threshold", c.ess_threshold, as_double);
    if (!(c.ess_threshold > 0.0 && c.ess_threshold <= 1.0)) {
      throw ConfigError("ess_threshold", "must be in (0, 1]");
    }
    c.max_passes = static_cast<int>(
        get_or<long>(j, "", "max_passes", c.max_passes, as_long));
    if (c.max_passes < 1) throw ConfigError("max_passes", "must be >= 1");
    c.convergence_tol =
        get_or<double>(j, "", "convergence_tol", c.convergence_tol, as_double);
    if (!(c.convergence_tol > 0.0)) {
      throw ConfigError("convergence_tol", "must be > 0");
    }
    c.min_accept = get_or<long>(j, "", "min_accept", c.min_accept, as_long);
    if (c.min_accept < 1) throw ConfigError("min_accept", "must be >= 1");
    c.seed = get_or<std::uint64_t>(j, "", "seed", c.seed, as_seed);
    if (j.contains("output_dir")) {
      c.output_dir = as_string(j.at("output_dir"), "output_dir");
    } else if (require_output_dir) {
      throw ConfigError("output_dir", "missing");
    }
    return c;
  }

  AbcConfig abc_config() const {
    AbcConfig a;
    a.epsilon = epsilon;
    a.m_target = m_target;
    a.m_max = m_max;
    a.use_qmc = use_qmc;
    return a;
  }

  UpdatePolicy policy() const {
    UpdatePolicy p;
    p.alpha = alpha;
    p.min_accept = min_accept;
    p.max_passes = max_passes;
    p.convergence_tol = convergence_tol;
    return p;
  }
};

namespace cfgdetail {

inline json load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("", "cannot open config file '" + path + "'");
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ConfigError("", std::string("config parse error: ") + e.what());
  }
  return j;
}

inline void write_trace_csv(const std::string& file, const EPTrace& trace,
                            Eigen::Index p) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write '" + file + "'");
  out << "pass,site,skipped,reason,z_hat,n_accepted,n_simulated";
  for (Eigen::Index a = 0; a < p; ++a) out << ",mu_" << a;
  for (Eigen::Index a = 0; a < p; ++a) {
    for (Eigen::Index b = a; b < p; ++b) out << ",sigma_" << a << "_" << b;
  }
  out << "\n";
  for (const UpdateRecord& rec : trace.records) {
    out << rec.pass << ',' << rec.site << ',' << (rec.skipped ? 1 : 0) << ','
        << skip_reason_label(rec.reason) << ',' << format_double(rec.Z_hat)
        << ',' << rec.n_accepted << ',' << rec.n_simulated;
    for (Eigen::Index a = 0; a < p; ++a) {
      out << ',' << format_double(rec.global_mu.size() ? rec.global_mu[a]
                                                       : std::nan(""));
    }
    for (Eigen::Index a = 0; a < p; ++a) {
      for (Eigen::Index b = a; b < p; ++b) {
        out << ','
            << format_double(rec.global_Sigma.size() ? rec.global_Sigma(a, b)
                                                     : std::nan(""));
      }
    }
    out << "\n";
  }
}

inline double quantile_sorted(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) return std::nan("");
  const double pos = q * static_cast<double>(sorted.size());
  std::size_t k = static_cast<std::size_t>(std::ceil(pos));
  if (k < 1) k = 1;
  if (k > sorted.size()) k = sorted.size();
  return sorted[k - 1];
}

inline void write_acceptance_csv(const std::string& file,
                                 const std::vector<AcceptanceRecord>& records) {
  std::ofstream out(file);
  if (!out) throw Error("cannot write '" + file + "'");
  out << "site,n_simulated,n_accepted,q05,q25,q50,q75,q95\n";
  for (const AcceptanceRecord& rec : records) {
    if (rec.distances.empty()) continue;
    std::vector<double> d = rec.distances;
    std::sort(d.begin(), d.end());
    out << rec.site << ',' << rec.n_simulated << ',' << rec.n_accepted << ','
        << format_double(quantile_sorted(d, 0.05)) << ','
        << format_double(quantile_sorted(d, 0.25)) << ','
        << format_double(quantile_sorted(d, 0.50)) << ','
        << format_double(quantile_sorted(d, 0.75)) << ','
        << format_double(quantile_sorted(d, 0.95)) << "\n";
  }
}

inline json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

inline json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    rows.push_back(vector_to_json(m.row(i).transpose()));
  }
  return rows;
}

/// Per-site acceptance records synthesized from a recycling pool: each
/// site's distances are the pool summaries' distances to its observed
/// summary (the recycled analog of the rejection estimator's records).
inline std::vector<AcceptanceRecord> pool_acceptance_records(
    const RecyclePool& pool, const ModelSpec& model, const AbcConfig& cfg) {
  std::vector<AcceptanceRecord> records;
  records.reserve(static_cast<std::size_t>(model.n_chunks));
  for (int i = 1; i <= model.n_chunks; ++i) {
    AcceptanceRecord rec;
    rec.site = i;
    rec.distances.reserve(static_cast<std::size_t>(pool.size()));
    for (const auto& summary : pool.chunk_summaries) {
      const double d =
          summary.size() == 0
              ? std::numeric_limits<double>::infinity()
              : summary_distance(summary, model.observed(i),
                                 cfg.distance_weights);
      rec.distances.push_back(d);
      if (d <= cfg.epsilon) ++rec.n_accepted;
    }
    rec.n_simulated = pool.size();
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace cfgdetail

/// Everything run_from_config produced, for programmatic callers.
struct RunResult {
  EPTrace trace;
  bool engine_error = false;
  std::string error_message;
  std::string trace_path;
  std::string final_path;
  std::string acceptance_path;
};

/// Loads a run config, executes the engine with the configured estimator,
/// and persists trace.csv, final.json, and acceptance.csv under output_dir.
/// Engine errors (e.g. every site skipped) are recorded in final.json
/// rather than thrown; config errors throw ConfigError.
inline RunResult run_from_config(const std::string& config_path) {
  using namespace cfgdetail;
  const json j = load_config_file(config_path);
  const RunConfig cfg = RunConfig::from_json(j, /*require_output_dir=*/true);
  const ModelSpec model = build_model(cfg.model_json, "model");

  std::unique_ptr<MomentEstimator> estimator;
  RejectionEstimator* rejection = nullptr;
  RecyclingEstimator* recycling = nullptr;
  if (cfg.use_recycling) {
    if (!model.iid) {
      throw ConfigError("use_recycling",
                        "recycling requires an IID model (chunk simulator "
                        "independent of the site index)");
    }
    auto est = std::make_unique<RecyclingEstimator>(
        model, cfg.abc_config(), cfg.m_max, cfg.ess_threshold, cfg.seed);
    recycling = est.get();
    estimator = std::move(est);
  } else {
    auto est = std::make_unique<RejectionEstimator>(model, cfg.abc_config());
    rejection = est.get();
    estimator = std::move(est);
  }

  RunResult result;
  try {
    result.trace =
        run(model, *estimator, cfg.schedule, cfg.policy(), cfg.seed);
  } catch (const Error& e) {
    result.engine_error = true;
    result.error_message = e.what();
  }

  std::filesystem::create_directories(cfg.output_dir);
  const auto outdir = std::filesystem::path(cfg.output_dir);
  result.trace_path = (outdir / "trace.csv").string();
  result.final_path = (outdir / "final.json").string();
  result.acceptance_path = (outdir / "acceptance.csv").string();

  write_trace_csv(result.trace_path, result.trace, model.theta_dim);

  std::vector<AcceptanceRecord> acc_records;
  if (rejection != nullptr) {
    for (const AcceptanceRecord& rec : rejection->last_records()) {
      if (!rec.distances.empty()) acc_records.push_back(rec);
    }
  } else if (recycling != nullptr && !result.engine_error) {
    try {
      acc_records = pool_acceptance_records(recycling->pool(), model,
                                            cfg.abc_config());
    } catch (const Error&) {
      // no pool was ever built; leave records empty
    }
  }
  write_acceptance_csv(result.acceptance_path, acc_records);

  json final_j;
  final_j["seed"] = cfg.seed;
  final_j["schedule"] = cfg.schedule.label();
  final_j["converged"] = result.trace.converged;
  final_j["passes"] = result.trace.passes_run;
  final_j["total_simulated"] = result.trace.total_simulated;
  final_j["pool_refreshes"] = result.trace.pool_refreshes;
  final_j["error"] =
      result.engine_error ? json(result.error_message) : json(nullptr);
  if (!result.engine_error) {
    const EPState& st = result.trace.final_state;
    final_j["r"] = vector_to_json(st.global.r);
    final_j["Q"] = matrix_to_json(st.global.Q);
    if (is_positive_definite(st.global.Q)) {
      const MomentParams mp = to_moments(st.global);
      final_j["mu"] = vector_to_json(mp.mu);
      final_j["Sigma"] = matrix_to_json(mp.Sigma);
    } else {
      final_j["mu"] = nullptr;
      final_j["Sigma"] = nullptr;
    }
  } else {
    final_j["r"] = nullptr;
    final_j["Q"] = nullptr;
    final_j["mu"] = nullptr;
    final_j["Sigma"] = nullptr;
  }
  final_j["config"] = cfg.echo;
  std::ofstream fout(result.final_path);
  if (!fout) throw Error("cannot write '" + result.final_path + "'");
  fout << final_j.dump(2) << "\n";
  return result;
}

/// Heat-map emitter: writes (nu, c, log nu, log c, integral) rows of the
/// correlation-distance grid against a reference (nu0, c0).
inline std::string emit_heatmap(const std::string& config_path) {
  using namespace cfgdetail;
  const json j = load_config_file(config_path);
  require_object(j, "");
  check_keys(j, "",
             {"reference", "nu_grid", "c_grid", "h_max", "n_quad", "output"});
  if (!j.contains("reference")) throw ConfigError("reference", "missing");
  const json& ref = j.at("reference");
  require_object(ref, "reference");
  check_keys(ref, "reference", {"nu", "c"});
  if (!ref.contains("nu") || !ref.contains("c")) {
    throw ConfigError("reference", "needs nu and c");
  }
  const double nu0 = as_double(ref.at("nu"), "reference.nu");
  const double c0 = as_double(ref.at("c"), "reference.c");
  if (!(nu0 > 0.0) || !(c0 > 0.0)) {
    throw ConfigError("reference", "nu and c must be > 0");
  }

  auto grid_values = [&](const std::string& key) {
    if (!j.contains(key)) throw ConfigError(key, "missing");
    const json& g = j.at(key);
    require_object(g, key);
    check_keys(g, key, {"min", "max", "count", "log_spaced"});
    if (!g.contains("min") || !g.contains("max")) {
      throw ConfigError(key, "needs min and max");
    }
    const double lo = as_double(g.at("min"), key + ".min");
    const double hi = as_double(g.at("max"), key + ".max");
    const long count = get_or<long>(g, key, "count", 20, as_long);
    const bool log_spaced = get_or<bool>(g, key, "log_spaced", true, as_bool);
    if (!(lo > 0.0) || !(hi >= lo)) {
      throw ConfigError(key, "requires 0 < min <= max");
    }
    if (count < 1) throw ConfigError(key + ".count", "must be >= 1");
    std::vector<double> vals;
    if (count == 1) {
      vals.push_back(lo);
      return vals;
    }
    for (long t = 0; t < count; ++t) {
      if (t == 0) {
        vals.push_back(lo);  // pin endpoints exactly
      } else if (t == count - 1) {
        vals.push_back(hi);
      } else {
        const double f =
            static_cast<double>(t) / static_cast<double>(count - 1);
        vals.push_back(
            log_spaced
                ? std::exp(std::log(lo) + f * (std::log(hi) - std::log(lo)))
                : lo + f * (hi - lo));
      }
    }
    return vals;
  };

  const std::vector<double> nus = grid_values("nu_grid");
  const std::vector<double> cs = grid_values("c_grid");
  const double h_max = get_or<double>(j, "", "h_max", 30.0, as_double);
  if (!(h_max > 0.0)) throw ConfigError("h_max", "must be > 0");
  const long n_quad = get_or<long>(j, "", "n_quad", 256, as_long);
  if (n_quad < 2) throw ConfigError("n_quad", "must be >= 2");
  if (!j.contains("output")) throw ConfigError("output", "missing");
  const std::string output = as_string(j.at("output"), "output");

  const Eigen::MatrixXd grid = correlation_distance_grid(
      nus, cs, nu0, c0, h_max, static_cast<int>(n_quad));

  if (const auto parent = std::filesystem::path(output).parent_path();
      !parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  std::ofstream out(output);
  if (!out) throw Error("cannot write '" + output + "'");
  out << "nu,c,log_nu,log_c,integral\n";
  for (std::size_t a = 0; a < nus.size(); ++a) {
    for (std::size_t b = 0; b < cs.size(); ++b) {
      out << format_double(nus[a]) << ',' << format_double(cs[b]) << ','
          << format_double(std::log(nus[a])) << ','
          << format_double(std::log(cs[b])) << ','
          << format_double(grid(static_cast<Eigen::Index>(a),
                                static_cast<Eigen::Index>(b)))
          << "\n";
    }
  }
  return output;
}

/// Per-pass posterior-mean trajectory: the global mean recorded at the end
/// of each pass (NaN where the global was transiently indefinite).
inline std::vector<std::pair<int, Eigen::VectorXd>> per_pass_means(
    const EPTrace& trace) {
  std::vector<std::pair<int, Eigen::VectorXd>> rows;
  for (const UpdateRecord& rec : trace.records) {
    if (!rows.empty() && rows.back().first == rec.pass) {
      rows.back().second = rec.global_mu;
    } else {
      rows.emplace_back(rec.pass, rec.global_mu);
    }
  }
  return rows;
}

/// Runs the same model under each schedule (optionally across several seeds)
/// and writes aligned per-pass posterior-mean trajectories.
inline std::string compare_schedules(const std::string& config_path) {
  using namespace cfgdetail;
  const json j = load_config_file(config_path);
  const RunConfig base = RunConfig::from_json(
      j, /*require_output_dir=*/false, {"schedules", "seeds", "output"});
  if (!j.contains("schedules")) throw ConfigError("schedules", "missing");
  const json& sj = j.at("schedules");
  if (!sj.is_array() || sj.empty()) {
    throw ConfigError("schedules", "expected a nonempty array");
  }
  std::vector<Schedule> schedules;
  for (std::size_t t = 0; t < sj.size(); ++t) {
    schedules.push_back(RunConfig::schedule_from(
        sj[t], "schedules[" + std::to_string(t) + "]"));
  }
  std::vector<std::uint64_t> seeds;
  if (j.contains("seeds")) {
    const json& ss = j.at("seeds");
    if (!ss.is_array() || ss.empty()) {
      throw ConfigError("seeds", "expected a nonempty array");
    }
    for (std::size_t t = 0; t < ss.size(); ++t) {
      seeds.push_back(as_seed(ss[t], "seeds[" + std::to_string(t) + "]"));
    }
  } else {
    seeds.push_back(base.seed);
  }
  if (!j.contains("output")) throw ConfigError("output", "missing");
  const std::string output = as_string(j.at("output"), "output");

  const ModelSpec model = build_model(base.model_json, "model");

  if (const auto parent = std::filesystem::path(output).parent_path();
      !parent.empty()) {
    std::filesystem::create_directories(parent);
  }
  std::ofstream out(output);
  if (!out) throw Error("cannot write '" + output + "'");
  out << "schedule,seed,pass";
  for (Eigen::Index a = 0; a < model.theta_dim; ++a) out << ",mu_" << a;
  out << "\n";
  for (const Schedule& sched : schedules) {
    for (std::uint64_t seed : seeds) {
      std::unique_ptr<MomentEstimator> estimator;
      if (base.use_recycling) {
        estimator = std::make_unique<RecyclingEstimator>(
            model, base.abc_config(), base.m_max, base.ess_threshold, seed);
      } else {
        estimator =
            std::make_unique<RejectionEstimator>(model, base.abc_config());
      }
      const EPTrace trace =
          run(model, *estimator, sched, base.policy(), seed);
      for (const auto& [pass, mu] : per_pass_means(trace)) {
        out << sched.label() << ',' << seed << ',' << pass;
        for (Eigen::Index a = 0; a < model.theta_dim; ++a) {
          out << ',' << format_double(mu.size() ? mu[a] : std::nan(""));
        }
        out << "\n";
      }
    }
  }
  return output;
}

}  // namespace epabc

#endif  // EPABC_HARNESS_HPP
