// Copyright 2026 The fmtlm Authors.
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

#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "fmtlm/config.hpp"

namespace fmtlm {

struct GradCheckEntry {
  std::string name;
  double max_rel_error = 0.0;
};

// Finite-difference check of every registered primitive at `points` random
// inputs. Binary primitives are checked against each operand; non-scalar
// outputs are reduced with a fixed random weighting.
std::vector<GradCheckEntry> check_primitives(std::uint64_t seed, std::size_t points = 10, double h = 1e-5);

// Finite-difference check of the full training loss (fusion, FMT, GRU head,
// cross-entropy) over a two-sample synthetic batch, for `n_params` randomly
// chosen parameters and `coords` distinct random entries of each. Parameters are
// first moved to a random point (each entry plus N(0, spread²)) so that
// attention logits are far from uniform.
std::vector<GradCheckEntry> check_model(const RunConfig& config, std::uint64_t seed, std::size_t n_params = 5,
                                        std::size_t coords = 4, double h = 1e-5, double spread = 0.2);

}  // namespace fmtlm
