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

#ifndef EPABC_ERRORS_HPP
#define EPABC_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace epabc {

/// Base class for all epabc error conditions.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

/// A symmetric factorization failed: the matrix is not positive definite.
class NotPositiveDefinite : public Error {
 public:
  explicit NotPositiveDefinite(const std::string& what) : Error(what) {}
};

/// The cavity precision Q - Q_i is not positive definite; no proposal
/// distribution exists for the local ABC step.
class CavityNotPositiveDefinite : public NotPositiveDefinite {
 public:
  explicit CavityNotPositiveDefinite(const std::string& what)
      : NotPositiveDefinite(what) {}
};

/// The simulation budget was exhausted before reaching the acceptance target.
class InsufficientAcceptances : public Error {
 public:
  InsufficientAcceptances(const std::string& what, long accepted, long simulated)
      : Error(what), n_accepted(accepted), n_simulated(simulated) {}
  long n_accepted;
  long n_simulated;
};

/// All importance weights for a site vanished.
class DegenerateWeights : public Error {
 public:
  explicit DegenerateWeights(const std::string& what) : Error(what) {}
};

/// Recycling was requested for a model whose chunks are not IID.
class NonIIDModel : public Error {
 public:
  explicit NonIIDModel(const std::string& what) : Error(what) {}
};

/// calibrate_epsilon was given no acceptance records.
class EmptyRecords : public Error {
 public:
  explicit EmptyRecords(const std::string& what) : Error(what) {}
};

/// The madogram regression has fewer than two usable pairs (or a singular
/// design) after dropping tied responses.
class DegenerateDesign : public Error {
 public:
  explicit DegenerateDesign(const std::string& what) : Error(what) {}
};

/// A correlation matrix could not be factorized even at maximum jitter.
class FactorizationFailure : public Error {
 public:
  explicit FactorizationFailure(const std::string& what) : Error(what) {}
};

/// A chunk simulator produced an invalid (e.g. non-finite) sample.
class SimulationFailure : public Error {
 public:
  explicit SimulationFailure(const std::string& what) : Error(what) {}
};

/// A run configuration failed to parse or validate. `field` holds the path
/// of the offending entry, e.g. "model.synthetic.n".
class ConfigError : public Error {
 public:
  explicit ConfigError(const std::string& field, const std::string& what)
      : Error(field.empty() ? what : field + ": " + what), field(field) {}
  std::string field;
};

}  // namespace epabc

#endif  // EPABC_ERRORS_HPP
