#include "untl/grad_check.hpp"

#include <cmath>
#include <stdexcept>
#include <utility>

namespace untl::diff {

namespace {

double eval_loss(const LossBuilder& fn, const std::vector<Matrix>& params) {
  Graph g;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(g.leaf(p, false));
  const double v = fn(g, leaves).scalar();
  if (!std::isfinite(v))
    throw std::runtime_error("grad_check: non-finite function value " + std::to_string(v));
  return v;
}

}  // namespace

GradCheckResult grad_check(const LossBuilder& fn, std::vector<Matrix> params, double step,
                           size_t max_coords, uint64_t seed) {
  if (step <= 0.0) throw std::invalid_argument("grad_check: step must be positive");

  Graph g;
  std::vector<Value> leaves;
  leaves.reserve(params.size());
  for (const Matrix& p : params) leaves.push_back(g.leaf(p, true));
  Value loss = fn(g, leaves);
  if (!std::isfinite(loss.scalar()))
    throw std::runtime_error("grad_check: non-finite function value");
  g.backward(loss);
  std::vector<Matrix> analytic;
  analytic.reserve(leaves.size());
  for (Value v : leaves) analytic.push_back(v.grad());

  std::vector<std::pair<size_t, size_t>> coords;  // (param, offset)
  for (size_t p = 0; p < params.size(); ++p)
    for (size_t i = 0; i < params[p].numel(); ++i) coords.emplace_back(p, i);

  if (coords.size() > max_coords) {
    Rng rng(seed);
    rng.shuffle(coords);
    coords.resize(max_coords);
  }

  GradCheckResult result;
  result.coords_checked = coords.size();
  for (auto [p, i] : coords) {
    const double saved = params[p].data[i];
    params[p].data[i] = saved + step;
    const double up = eval_loss(fn, params);
    params[p].data[i] = saved - step;
    const double down = eval_loss(fn, params);
    params[p].data[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic[p].data[i];
    const double rel = std::fabs(a - numeric) / std::max(1.0, std::fabs(a));
    result.max_rel_error = std::max(result.max_rel_error, rel);
  }
  return result;
}

}  // namespace untl::diff
