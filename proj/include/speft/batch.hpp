// Copyright 2026 The SPEFT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <vector>

namespace speft {

/// One supervised example. Which fields are populated depends on the task:
/// regression uses `features`/`targets`, classification `features` or
/// `tokens` plus `label`, language modelling `tokens`/`next_tokens`.
struct Example {
  std::vector<double> features;
  std::vector<double> targets;
  std::vector<int> tokens;
  std::vector<int> next_tokens;
  int label = -1;

  friend bool operator==(const Example&, const Example&) = default;
};

/// Non-owning view of a mini-batch; examples live in their Dataset.
using Batch = std::vector<const Example*>;

}  // namespace speft
