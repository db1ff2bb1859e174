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

#include "adkl/param_set.hpp"

#include "adkl/errors.hpp"

namespace adkl {

std::string_view to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::theta: return "theta";
    case ParamGroup::eta: return "eta";
    case ParamGroup::rho: return "rho";
  }
  return "?";
}

std::optional<ParamGroup> parse_param_group(std::string_view s) {
  if (s == "theta") return ParamGroup::theta;
  if (s == "eta") return ParamGroup::eta;
  if (s == "rho") return ParamGroup::rho;
  return std::nullopt;
}

Param& ParamSet::add(const std::string& name, ParamGroup group, Array value) {
  if (contains(name)) throw ContractError("duplicate parameter '" + name + "'");
  Array grad = Array::zeros(value.shape());
  auto [it, ok] = entries_.emplace(name, Param{std::move(value), std::move(grad), group});
  return it->second;
}

Param& ParamSet::at(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

const Param& ParamSet::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end()) throw ContractError("unknown parameter '" + name + "'");
  return it->second;
}

void ParamSet::zero_grad() {
  for (auto& [name, p] : entries_) std::fill(p.grad.data().begin(), p.grad.data().end(), 0.0);
}

std::size_t ParamSet::scalar_count() const {
  std::size_t n = 0;
  for (const auto& [name, p] : entries_) n += p.value.size();
  return n;
}

std::size_t ParamSet::scalar_count(ParamGroup group) const {
  std::size_t n = 0;
  for (const auto& [name, p] : entries_) {
    if (p.group == group) n += p.value.size();
  }
  return n;
}

std::vector<std::string> ParamSet::names() const {
  std::vector<std::string> out;
  for (const auto& [name, p] : entries_) out.push_back(name);
  return out;
}

std::vector<std::string> ParamSet::names(ParamGroup group) const {
  std::vector<std::string> out;
  for (const auto& [name, p] : entries_) {
    if (p.group == group) out.push_back(name);
  }
  return out;
}

void ParamSet::assign_values(const ParamSet& other) {
  if (other.size() != size()) throw ContractError("parameter sets differ in size");
  for (auto& [name, p] : entries_) {
    const Param& q = other.at(name);
    if (q.value.shape() != p.value.shape()) {
      throw DimensionError("parameter '" + name + "' shape mismatch");
    }
    p.value = q.value;
  }
}

}  // namespace adkl
