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

#ifndef EPABC_BESSEL_HPP
#define EPABC_BESSEL_HPP

#include <cmath>
#include <cstdint>
#include <limits>

#include "epabc/errors.hpp"

namespace epabc {
namespace detail {

// Coefficients c_k of 1/Gamma(z) = sum_k c_k z^k (Abramowitz & Stegun
// 6.1.34), so that 1/Gamma(1+z) = c1 + c2 z + c3 z^2 + ...
// Used for the cancellation-free small-|mu| evaluation of Temme's
// Gamma_1(mu) = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu) and
// Gamma_2(mu) = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2.
inline constexpr double kInvGammaC[13] = {
    1.0,                       // c1
    0.5772156649015329,        // c2 (Euler-Mascheroni)
    -0.6558780715202538,       // c3
    -0.0420026350340952,       // c4
    0.1665386113822915,        // c5
    -0.0421977345555443,       // c6
    -0.0096219715278770,       // c7
    0.0072189432466630,        // c8
    -0.0011651675918591,       // c9
    -0.0002152416741149,       // c10
    0.0001280502823882,        // c11
    -0.0000201348547807,       // c12
    -0.0000012504934821,       // c13
};

// Temme auxiliary gammas for |mu| <= 1/2. Outputs:
//   gam1 = (1/Gamma(1-mu) - 1/Gamma(1+mu)) / (2 mu)   (limit -c2 at mu=0)
//   gam2 = (1/Gamma(1-mu) + 1/Gamma(1+mu)) / 2
//   gampl = 1/Gamma(1+mu), gammi = 1/Gamma(1-mu)
inline void temme_gammas(double mu, double& gam1, double& gam2, double& gampl,
                         double& gammi) {
  const double mu2 = mu * mu;
  if (std::fabs(mu) < 0.1) {
    // Odd/even sub-series of 1/Gamma(1+z); truncation error < 1e-17 here.
    gam1 = -(kInvGammaC[1] +
             mu2 * (kInvGammaC[3] +
                    mu2 * (kInvGammaC[5] +
                           mu2 * (kInvGammaC[7] +
                                  mu2 * (kInvGammaC[9] + mu2 * kInvGammaC[11])))));
    gam2 = kInvGammaC[0] +
           mu2 * (kInvGammaC[2] +
                  mu2 * (kInvGammaC[4] +
                         mu2 * (kInvGammaC[6] +
                                mu2 * (kInvGammaC[8] + mu2 * kInvGammaC[10]))));
    gampl = gam2 - mu * gam1;
    gammi = gam2 + mu * gam1;
  } else {
    gampl = 1.0 / std::tgamma(1.0 + mu);
    gammi = 1.0 / std::tgamma(1.0 - mu);
    gam1 = (gammi - gampl) / (2.0 * mu);
    gam2 = (gammi + gampl) / 2.0;
  }
}

// K_nu represented as kmu * 2^e2 to dodge overflow during the upward
// recurrence (K_nu(x) ~ Gamma(nu) (2/x)^nu / 2 explodes for large nu/x).
struct ScaledBessel {
  double kmu;    // K at the requested order, times 2^-e2
  std::int64_t e2;
};

// K at orders mu and mu+1 for |mu| <= 1/2 via Temme's series (x <= 2) or the
// Steed/Thompson-Barnett continued fraction CF2 (x > 2), then forward
// recurrence in the order. Positive-direction recurrence for K is stable.
inline ScaledBessel bessel_k_scaled(double nu, double x) {
  if (!(x > 0.0) || !std::isfinite(nu)) {
    throw Error("bessel_k: requires x > 0 and finite nu");
  }
  nu = std::fabs(nu);  // K_{-nu} = K_nu
  constexpr double kEps = std::numeric_limits<double>::epsilon();
  constexpr int kMaxIter = 30000;
  const int nl = static_cast<int>(nu + 0.5);
  const double mu = nu - nl;  // in [-1/2, 1/2]
  const double mu2 = mu * mu;
  const double xi = 1.0 / x;
  const double xi2 = 2.0 * xi;

  double rkmu;   // K_mu (scaled)
  double rk1;    // K_{mu+1} (scaled)
  std::int64_t e2 = 0;

  if (x <= 2.0) {
    // Temme 1975 series.
    double gam1, gam2, gampl, gammi;
    temme_gammas(mu, gam1, gam2, gampl, gammi);
    const double pimu = M_PI * mu;
    const double fact =
        (std::fabs(pimu) < 1e-8) ? 1.0 : pimu / std::sin(pimu);
    const double d = -std::log(x / 2.0);
    const double e = mu * d;
    const double fact2 = (std::fabs(e) < 1e-8) ? 1.0 : std::sinh(e) / e;
    double ff = fact * (gam1 * std::cosh(e) + gam2 * fact2 * d);
    double sum = ff;
    double ee = std::exp(e);
    double p = 0.5 * ee / gampl;
    double q = 0.5 / (ee * gammi);
    double c = 1.0;
    const double d2 = 0.25 * x * x;
    double sum1 = p;
    int i = 1;
    for (; i <= kMaxIter; ++i) {
      ff = (i * ff + p + q) / (i * i - mu2);
      c *= d2 / i;
      p /= (i - mu);
      q /= (i + mu);
      const double del = c * ff;
      sum += del;
      const double del1 = c * (p - i * ff);
      sum1 += del1;
      if (std::fabs(del) < std::fabs(sum) * kEps) break;
    }
    if (i > kMaxIter) {
      throw Error("bessel_k: series failed to converge");
    }
    rkmu = sum;
    rk1 = sum1 * xi2;
  } else {
    // CF2 evaluated by the modified Lentz/Thompson-Barnett method.
    double b = 2.0 * (1.0 + x);
    double d = 1.0 / b;
    double h = d;
    double delh = d;
    double q1 = 0.0;
    double q2 = 1.0;
    const double a1 = 0.25 - mu2;
    double q = a1;
    double c = a1;
    double a = -a1;
    double s = 1.0 + q * delh;
    int i = 2;
    for (; i <= kMaxIter; ++i) {
      a -= 2 * (i - 1);
      c = -a * c / i;
      const double qnew = (q1 - b * q2) / a;
      q1 = q2;
      q2 = qnew;
      q += c * qnew;
      b += 2.0;
      d = 1.0 / (b + a * d);
      delh = (b * d - 1.0) * delh;
      h += delh;
      const double dels = q * delh;
      s += dels;
      if (std::fabs(dels / s) < kEps) break;
    }
    if (i > kMaxIter) {
      throw Error("bessel_k: continued fraction failed to converge");
    }
    h = a1 * h;
    // K_mu = sqrt(pi/(2x)) exp(-x) / s, kept in log space so huge x cannot
    // underflow before the caller decides what scale it needs.
    const double log_kmu =
        0.5 * std::log(M_PI / (2.0 * x)) - x - std::log(s);
    constexpr double kLn2 = 0.6931471805599453;
    e2 = static_cast<std::int64_t>(std::floor(log_kmu / kLn2));
    rkmu = std::exp(log_kmu - static_cast<double>(e2) * kLn2);
    rk1 = rkmu * (mu + x + 0.5 - h) * xi;
  }

  // March the order up from mu to nu = mu + nl, rescaling by 2^-256 whenever
  // the iterates approach the overflow boundary (one step can multiply by
  // 2 nu / x, which is enormous for tiny x).
  for (int i = 1; i <= nl; ++i) {
    const double rktemp = (mu + i) * xi2 * rk1 + rkmu;
    rkmu = rk1;
    rk1 = rktemp;
    if (rk1 > 0x1.0p+256) {
      rkmu = std::ldexp(rkmu, -256);
      rk1 = std::ldexp(rk1, -256);
      e2 += 256;
    }
  }
  return {rkmu, e2};
}

}  // namespace detail

/// Modified Bessel function of the second kind K_nu(x), nu real, x > 0.
/// Overflows to +inf / underflows to 0 outside the double range.
inline double bessel_k(double nu, double x) {
  const detail::ScaledBessel s = detail::bessel_k_scaled(nu, x);
  if (s.e2 > 2000) return std::numeric_limits<double>::infinity();
  if (s.e2 < -2000) return 0.0;
  return std::ldexp(s.kmu, static_cast<int>(s.e2));
}

/// log K_nu(x); finite wherever K_nu(x) is positive, even when K_nu itself
/// would over- or underflow a double.
inline double log_bessel_k(double nu, double x) {
  const detail::ScaledBessel s = detail::bessel_k_scaled(nu, x);
  constexpr double kLn2 = 0.6931471805599453;
  return std::log(s.kmu) + static_cast<double>(s.e2) * kLn2;
}

}  // namespace epabc

#endif  // EPABC_BESSEL_HPP
