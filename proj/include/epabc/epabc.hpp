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

#ifndef EPABC_EPABC_HPP
#define EPABC_EPABC_HPP

#include "epabc/abc.hpp"
#include "epabc/bessel.hpp"
#include "epabc/ep.hpp"
#include "epabc/errors.hpp"
#include "epabc/extremes.hpp"
#include "epabc/gaussian.hpp"
#include "epabc/harness.hpp"
#include "epabc/io.hpp"
#include "epabc/model.hpp"
#include "epabc/normal.hpp"
#include "epabc/qmc.hpp"
#include "epabc/rng.hpp"

#endif  // EPABC_EPABC_HPP
