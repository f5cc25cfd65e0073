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

#ifndef EPABC_GAUSSIAN_HPP
#define EPABC_GAUSSIAN_HPP

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <utility>

#include "epabc/errors.hpp"

namespace epabc {

/// Gaussian natural parameters (r, Q): density proportional to
/// exp{-(1/2) theta^T Q theta + r^T theta}. The -1/2 stays folded into the
/// operations, so sites combine by plain componentwise addition. Q is
/// symmetrized on construction and need not be positive definite (site
/// parameters may be indefinite).
struct NaturalParams {
  Eigen::VectorXd r;
  Eigen::MatrixXd Q;

  NaturalParams() = default;

  NaturalParams(Eigen::VectorXd r_in, Eigen::MatrixXd Q_in)
      : r(std::move(r_in)), Q(std::move(Q_in)) {
    if (r.size() < 1 || Q.rows() != r.size() || Q.cols() != r.size()) {
      throw Error("NaturalParams: dimension mismatch between r and Q");
    }
    Q = ((Q + Q.transpose()) / 2.0).eval();
  }

  static NaturalParams zero(Eigen::Index p) {
    return NaturalParams(Eigen::VectorXd::Zero(p),
                         Eigen::MatrixXd::Zero(p, p));
  }

  Eigen::Index dim() const { return r.size(); }
};

/// Tests positive definiteness by attempting a Cholesky factorization (which
/// downstream solves need anyway). Assumes the argument is symmetric.
inline bool is_positive_definite(const Eigen::MatrixXd& a) {
  if (a.rows() == 0 || a.rows() != a.cols()) return false;
  if (!a.allFinite()) return false;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  return llt.info() == Eigen::Success;
}

/// Gaussian moment parameters (mu, Sigma). Sigma is symmetrized and must be
/// positive definite; construction throws otherwise.
struct MomentParams {
  Eigen::VectorXd mu;
  Eigen::MatrixXd Sigma;

  MomentParams() = default;

  MomentParams(Eigen::VectorXd mu_in, Eigen::MatrixXd Sigma_in)
      : mu(std::move(mu_in)), Sigma(std::move(Sigma_in)) {
    if (mu.size() < 1 || Sigma.rows() != mu.size() ||
        Sigma.cols() != mu.size()) {
      throw Error("MomentParams: dimension mismatch between mu and Sigma");
    }
    Sigma = ((Sigma + Sigma.transpose()) / 2.0).eval();
    if (!is_positive_definite(Sigma)) {
      throw NotPositiveDefinite("MomentParams: Sigma is not positive definite");
    }
  }

  Eigen::Index dim() const { return mu.size(); }
};

/// Natural -> moment conversion: Sigma = Q^{-1}, mu = Q^{-1} r.
inline MomentParams to_moments(const NaturalParams& np) {
  Eigen::LLT<Eigen::MatrixXd> llt(np.Q);
  if (!np.Q.allFinite() || llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("to_moments: Q is not positive definite");
  }
  const Eigen::Index p = np.dim();
  Eigen::MatrixXd sigma = llt.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::VectorXd mu = llt.solve(np.r);
  return MomentParams(std::move(mu), std::move(sigma));
}

/// Moment -> natural conversion: Q = Sigma^{-1}, r = Sigma^{-1} mu.
inline NaturalParams to_natural(const MomentParams& mp) {
  Eigen::LLT<Eigen::MatrixXd> llt(mp.Sigma);
  if (!mp.Sigma.allFinite() || llt.info() != Eigen::Success) {
    throw NotPositiveDefinite("to_natural: Sigma is not positive definite");
  }
  const Eigen::Index p = mp.dim();
  Eigen::MatrixXd q = llt.solve(Eigen::MatrixXd::Identity(p, p));
  Eigen::VectorXd r = llt.solve(mp.mu);
  return NaturalParams(std::move(r), std::move(q));
}

/// Cavity distribution: the global approximation with one site divided out,
/// i.e. componentwise subtraction of natural parameters. Definiteness of the
/// result is the consumer's concern.
inline NaturalParams cavity(const NaturalParams& global,
                            const NaturalParams& site) {
  if (global.dim() != site.dim()) {
    throw Error("cavity: dimension mismatch");
  }
  return NaturalParams(global.r - site.r, global.Q - site.Q);
}

/// Site product: componentwise addition of natural parameters (inverse of
/// cavity).
inline NaturalParams add(const NaturalParams& a, const NaturalParams& b) {
  if (a.dim() != b.dim()) {
    throw Error("add: dimension mismatch");
  }
  return NaturalParams(a.r + b.r, a.Q + b.Q);
}

/// KL(p || q) between two Gaussians, in closed form:
/// 0.5 [ tr(Sq^{-1} Sp) + (mq-mp)^T Sq^{-1} (mq-mp) - d + ln|Sq| - ln|Sp| ].
inline double kl_gaussian(const MomentParams& p, const MomentParams& q) {
  if (p.dim() != q.dim()) {
    throw Error("kl_gaussian: dimension mismatch");
  }
  Eigen::LLT<Eigen::MatrixXd> lltq(q.Sigma);
  Eigen::LLT<Eigen::MatrixXd> lltp(p.Sigma);
  if (lltq.info() != Eigen::Success || lltp.info() != Eigen::Success) {
    throw NotPositiveDefinite("kl_gaussian: covariance not positive definite");
  }
  const Eigen::Index d = p.dim();
  const double trace_term = lltq.solve(p.Sigma).trace();
  const Eigen::VectorXd dm = q.mu - p.mu;
  const double quad_term = dm.dot(lltq.solve(dm));
  const double logdet_q =
      2.0 * lltq.matrixL().toDenseMatrix().diagonal().array().log().sum();
  const double logdet_p =
      2.0 * lltp.matrixL().toDenseMatrix().diagonal().array().log().sum();
  return 0.5 * (trace_term + quad_term - static_cast<double>(d) + logdet_q -
                logdet_p);
}

/// Precomputed Gaussian density evaluator: log N(x; mu, Sigma) including the
/// normalizing constant. Used for importance weights and ESS diagnostics.
class GaussianDensity {
 public:
  explicit GaussianDensity(const MomentParams& mp)
      : mu_(mp.mu), llt_(mp.Sigma) {
    if (llt_.info() != Eigen::Success) {
      throw NotPositiveDefinite(
          "GaussianDensity: Sigma is not positive definite");
    }
    const double logdet =
        2.0 * llt_.matrixL().toDenseMatrix().diagonal().array().log().sum();
    constexpr double kLog2Pi = 1.8378770664093454836;
    log_norm_ = -0.5 * (static_cast<double>(mp.dim()) * kLog2Pi + logdet);
  }

  double log_pdf(const Eigen::VectorXd& x) const {
    const Eigen::VectorXd d = x - mu_;
    return log_norm_ - 0.5 * d.dot(llt_.solve(d));
  }

  /// Lower Cholesky factor of Sigma (for sampling mu + L z).
  Eigen::MatrixXd chol_lower() const { return llt_.matrixL(); }

  const Eigen::VectorXd& mean() const { return mu_; }

 private:
  Eigen::VectorXd mu_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double log_norm_;
};

}  // namespace epabc

#endif  // EPABC_GAUSSIAN_HPP
