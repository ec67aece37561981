// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "hkd/rng.hpp"
#include "hkd/tensor.hpp"

namespace hkd::testing {

struct GradCheckOptions {
  double step = 1e-4;
  double rel_tol = 1e-5;
  /// Entries whose analytic and numeric gradients are both below this are
  /// compared with abs_tol instead of rel_tol.
  double magnitude_floor = 1e-6;
  double abs_tol = 1e-8;
  /// 0 checks every entry; otherwise this many random entries per input.
  std::size_t max_entries_per_input = 0;
  std::uint64_t selection_seed = 0;
};

struct GradCheckReport {
  std::size_t checked = 0;
  /// Entries where the stencil at h and h/2 disagree for every tried step
  /// down to step/100: a kink or a selection flip lies within the stencil.
  std::size_t nonsmooth = 0;
  std::size_t failures = 0;
  double max_rel_err = 0.0;
  std::string worst;

  bool ok() const { return failures == 0; }
  std::string summary() const;
};

/// Compares reverse-mode gradients of the scalar `loss` with respect to each
/// leaf in `inputs` against a five-point central difference.
GradCheckReport check_gradients(const std::function<Tensor()>& loss, std::vector<Tensor> inputs,
                                const GradCheckOptions& opts = {});

/// Merges `other` into `into`.
void merge(GradCheckReport& into, const GradCheckReport& other);

}  // namespace hkd::testing
