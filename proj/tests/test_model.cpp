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

#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "epabc/model.hpp"

using namespace epabc;

namespace {

MomentParams std_prior() {
  Eigen::VectorXd mu(1);
  mu << 0.0;
  Eigen::MatrixXd sigma(1, 1);
  sigma << 1.0;
  return MomentParams(mu, sigma);
}

Eigen::VectorXd theta1(double v) {
  Eigen::VectorXd t(1);
  t << v;
  return t;
}

bool bits_equal(const Eigen::VectorXd& a, const Eigen::VectorXd& b) {
  return a.size() == b.size() && (a.array() == b.array()).all();
}

}  // namespace

TEST_CASE("gauss_mean exact posterior matches conjugate formulas", "[model]") {
  {
    const MomentParams post = gauss_mean_exact_posterior(std_prior(), {0.0});
    CHECK(post.mu[0] == Catch::Approx(0.0).margin(1e-14));
    CHECK(post.Sigma(0, 0) == Catch::Approx(0.5).margin(1e-14));
  }
  {
    const MomentParams post =
        gauss_mean_exact_posterior(std_prior(), {2.0, 2.0, 2.0, 2.0});
    CHECK(post.mu[0] == Catch::Approx(8.0 / 5.0).margin(1e-14));
    CHECK(post.Sigma(0, 0) == Catch::Approx(1.0 / 5.0).margin(1e-14));
  }
}

TEST_CASE("chunk simulation is a pure function of its key", "[model]") {
  const ModelSpec model =
      make_gauss_mean_model({0.5, -1.0, 2.0}, std_prior(), 77);
  const Eigen::VectorXd th = theta1(0.3);
  const Eigen::VectorXd a = model.simulate_chunk(1, th, 5).summary;
  const Eigen::VectorXd b = model.simulate_chunk(1, th, 5).summary;
  CHECK(bits_equal(a, b));  // bit-identical

  // different draw index, theta, or seed changes the draw
  CHECK_FALSE(bits_equal(model.simulate_chunk(1, th, 6).summary, a));
  CHECK_FALSE(bits_equal(model.simulate_chunk(1, theta1(0.30000001), 5).summary, a));
  const ModelSpec other =
      make_gauss_mean_model({0.5, -1.0, 2.0}, std_prior(), 78);
  CHECK_FALSE(bits_equal(other.simulate_chunk(1, th, 5).summary, a));
}

TEST_CASE("iid models share draws across sites", "[model]") {
  const ModelSpec model =
      make_gauss_mean_model({0.5, -1.0, 2.0}, std_prior(), 9);
  const Eigen::VectorXd th = theta1(-0.7);
  CHECK(bits_equal(model.simulate_chunk(1, th, 11).summary,
                   model.simulate_chunk(3, th, 11).summary));
}

TEST_CASE("non-iid models keep sites distinct", "[model]") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  const MomentParams prior(mu, Eigen::MatrixXd::Identity(2, 2));
  const ModelSpec model = make_ar1_model({0.4, 0.1, -0.2}, 0.0, prior, 3);
  Eigen::VectorXd th(2);
  th << 0.2, 0.0;
  CHECK(model.iid == false);
  CHECK_FALSE(bits_equal(model.simulate_chunk(1, th, 4).summary,
                         model.simulate_chunk(2, th, 4).summary));
}

TEST_CASE("ar1 simulator conditions on the previous observation", "[model]") {
  Eigen::VectorXd mu = Eigen::VectorXd::Zero(2);
  const MomentParams prior(mu, Eigen::MatrixXd::Identity(2, 2));
  const std::vector<double> y = {0.4, 0.1, -0.2};
  const double y0 = 1.5;
  const ModelSpec model = make_ar1_model(y, y0, prior, 3);
  // with sigma -> exp(-40) ~ 0 the draw collapses onto rho * prev
  Eigen::VectorXd th(2);
  th << std::atanh(0.5), -40.0;
  CHECK(model.simulate_chunk(1, th, 0).summary[0] ==
        Catch::Approx(0.5 * y0).margin(1e-9));
  CHECK(model.simulate_chunk(2, th, 0).summary[0] ==
        Catch::Approx(0.5 * y[0]).margin(1e-9));
  CHECK(model.simulate_chunk(3, th, 0).summary[0] ==
        Catch::Approx(0.5 * y[1]).margin(1e-9));
}

TEST_CASE("observed summaries are 1-based per chunk", "[model]") {
  const ModelSpec model =
      make_gauss_mean_model({0.5, -1.0, 2.0}, std_prior(), 0);
  CHECK(model.n_chunks == 3);
  CHECK(model.observed(1)[0] == 0.5);
  CHECK(model.observed(3)[0] == 2.0);
  CHECK_THROWS_AS(model.observed(0), Error);
  CHECK_THROWS_AS(model.observed(4), Error);
}

TEST_CASE("non-finite parameters are simulation failures", "[model]") {
  const ModelSpec model = make_gauss_mean_model({0.0}, std_prior(), 0);
  CHECK_THROWS_AS(
      model.simulate_chunk(1, theta1(std::nan("")), 0),
      SimulationFailure);
  CHECK_THROWS_AS(
      model.simulate_chunk(
          1, theta1(std::numeric_limits<double>::infinity()), 0),
      SimulationFailure);
  CHECK_THROWS_AS(model.simulate_chunk(4, theta1(0.0), 0), Error);
}
