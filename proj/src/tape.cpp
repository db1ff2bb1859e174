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

#include <string>

#include "adkl/diffcore.hpp"
#include "adkl/errors.hpp"

namespace adkl {

Tape& Var::tape() const {
  if (!tape_) throw ContractError("use of an unbound Var");
  return *tape_;
}

const Array& Var::value() const { return tape().value(*this); }

Var Tape::constant(Array value) {
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::bind(const ParamSet* set, Param* mutable_param, const Param& param,
               const std::string& name) {
  auto key = std::make_pair(set, name);
  if (auto it = param_ids_.find(key); it != param_ids_.end()) return Var(this, it->second);
  Node n;
  n.external = &param.value;
  n.param = mutable_param;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  const std::size_t id = nodes_.size() - 1;
  param_ids_.emplace(std::move(key), id);
  return Var(this, id);
}

Var Tape::param(ParamSet& params, const std::string& name) {
  Param& p = params.at(name);
  return bind(&params, &p, p, name);
}

Var Tape::param(const ParamSet& params, const std::string& name) {
  const Param& p = params.at(name);
  return bind(&params, nullptr, p, name);
}

const Array& Tape::value(const Var& v) const {
  if (v.tape_ != this) throw ContractError("Var belongs to a different tape");
  const Node& n = nodes_[v.id_];
  return n.external ? *n.external : n.value;
}

Var Tape::record(Array value, std::vector<std::size_t> inputs, Backward backward, const char* op) {
  if (!value.all_finite()) {
    throw NumericalError(std::string("non-finite output from ") + op + " of shape " +
                         to_string(value.shape()));
  }
  Node n;
  n.value = std::move(value);
  for (auto id : inputs) n.requires_grad = n.requires_grad || nodes_[id].requires_grad;
  if (n.requires_grad) n.backward = std::move(backward);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

MutableMatrixView Tape::grad_view(std::size_t id) {
  Node& n = nodes_[id];
  if (!n.has_grad) {
    const Array& v = n.external ? *n.external : n.value;
    n.grad = Array::unchecked(v.shape(), Storage(v.size(), 0.0));
    n.has_grad = true;
  }
  return n.grad.view();
}

void Tape::backward(const Var& loss) {
  if (loss.tape_ != this) throw ContractError("loss belongs to a different tape");
  if (swept_) throw ContractError("tape has already been swept");
  if (value(loss).size() != 1) {
    throw ContractError("backward() needs a scalar loss, got shape " +
                        to_string(value(loss).shape()));
  }
  swept_ = true;
  grad_view(loss.id_)(0, 0) = 1.0;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.has_grad) continue;
    if (n.backward) n.backward(*this, n.grad);
    if (n.param) {
      auto dst = n.param->grad.view();
      dst += n.grad.view();
    }
  }
}

Array Tape::grad(const Var& v) const {
  if (v.tape_ != this) throw ContractError("Var belongs to a different tape");
  const Node& n = nodes_[v.id_];
  if (n.has_grad) return n.grad;
  const Array& val = n.external ? *n.external : n.value;
  return Array::zeros(val.shape());
}

}  // namespace adkl
