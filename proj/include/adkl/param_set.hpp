// Copyright 2026 The ADKL Authors
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

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "adkl/array.hpp"

namespace adkl {

/// theta: input extractor u'/u and conditional embedding o.
/// eta: task encoder networks v, r, w.
/// rho: kernel hyperparameters.
enum class ParamGroup { theta, eta, rho };

std::string_view to_string(ParamGroup g);
std::optional<ParamGroup> parse_param_group(std::string_view s);

struct Param {
  Array value;
  Array grad;
  ParamGroup group;
};

/// Named learnable arrays with gradient slots. Iteration order is by name,
/// which makes reductions over parameters deterministic.
class ParamSet {
 public:
  /// Throws ContractError if the name already exists.
  Param& add(const std::string& name, ParamGroup group, Array value);

  bool contains(const std::string& name) const { return entries_.count(name) != 0; }
  Param& at(const std::string& name);
  const Param& at(const std::string& name) const;

  void zero_grad();
  std::size_t size() const { return entries_.size(); }
  std::size_t scalar_count() const;
  std::size_t scalar_count(ParamGroup group) const;
  std::vector<std::string> names() const;
  std::vector<std::string> names(ParamGroup group) const;

  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

  /// Copies values (not gradients) from `other`; names and shapes must match.
  void assign_values(const ParamSet& other);

 private:
  std::map<std::string, Param> entries_;
};

}  // namespace adkl
