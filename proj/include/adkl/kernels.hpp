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

#include <optional>
#include <string>
#include <string_view>

#include "adkl/diffcore.hpp"

namespace adkl {

enum class KernelFamily { linear, rbf };

std::string_view to_string(KernelFamily f);
std::optional<KernelFamily> parse_kernel_family(std::string_view s);

struct KernelSpec {
  KernelFamily family = KernelFamily::linear;
  bool normalized = false;
};

/// Name of the rbf log length-scale in a ParamSet (rho group).
inline constexpr const char* kLogLengthscale = "rho.log_lengthscale";
/// Floor under the radical of the normalized kernel.
inline constexpr double kNormalizeFloor = 1e-12;

/// Registers the kernel's hyperparameters: nothing for linear, log l = 0 for rbf.
void add_kernel_params(const KernelSpec& spec, ParamSet& params);

struct GramMatrix {
  Var values;
  bool square = false;
};

/// A KernelSpec together with its hyperparameters bound on a tape.
class Kernel {
 public:
  /// `log_lengthscale` is required for rbf and ignored for linear.
  Kernel(KernelSpec spec, Var log_lengthscale = {});

  const KernelSpec& spec() const { return spec_; }

  /// Pairwise kernel values between rows [m x d] and cols [n x d]. Pass
  /// square = true when rows and cols are the same point set.
  GramMatrix gram(const Var& rows, const Var& cols, bool square = false) const;
  /// Single evaluation k(a, b) as a scalar node; a and b are [1 x d] (or [d]).
  Var eval(const Var& a, const Var& b) const;
  /// Self-similarities k(x_i, x_i) as [n x 1], before normalization.
  Var self_similarity(const Var& points) const;
  /// k(x_i, x_i) as the gram would report it (ones when normalized).
  Var prior_variance(const Var& points) const;

 private:
  Var raw_gram(const Var& rows, const Var& cols) const;

  KernelSpec spec_;
  Var log_lengthscale_;
};

/// k_ab / sqrt(max(k_aa * k_bb, floor)).
double normalize(double k_ab, double k_aa, double k_bb, double floor = kNormalizeFloor);

}  // namespace adkl
