#pragma once

#include <functional>
#include <span>
#include <vector>

#include "untl/graph.hpp"
#include "untl/rng.hpp"

namespace untl::diff {

// Builds a scalar loss over the given parameter leaves. Called repeatedly
// with perturbed copies, so it must be deterministic in its inputs.
using LossBuilder = std::function<Value(Graph&, std::span<const Value>)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  size_t coords_checked = 0;
};

// Compares analytic gradients against central finite differences on up to
// `max_coords` randomly chosen parameter coordinates. Relative error is
// |analytic - numeric| / max(1, |analytic|).
GradCheckResult grad_check(const LossBuilder& fn, std::vector<Matrix> params, double step,
                           size_t max_coords, uint64_t seed);

}  // namespace untl::diff
