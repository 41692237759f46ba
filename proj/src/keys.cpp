#include "untl/keys.hpp"

#include <cmath>
#include <stdexcept>

#include "untl/common.hpp"
#include "untl/rng.hpp"

namespace untl::keys {

PromptKey make_prompt_key(const std::string& text, const enc::Vocab& vocab, int max_len) {
  PromptKey key;
  key.text = text;
  for (const auto& tok : enc::split_tokens(text)) key.token_ids.push_back(vocab.id_of(tok));
  if (key.token_ids.empty())
    throw ValidationError("prompt key: text '" + text + "' tokenizes to nothing");
  if (key.length() > max_len / 2)
    throw ValidationError("prompt key: " + std::to_string(key.length()) +
                          " tokens exceed half the sequence budget (" +
                          std::to_string(max_len / 2) + ")");
  return key;
}

std::vector<int> prepend_prompt(const PromptKey& key, std::span<const int> token_ids,
                                int max_len) {
  if (key.length() > max_len - 1)
    throw ValidationError("prompt key: " + std::to_string(key.length()) +
                          " tokens cannot fit a sequence budget of " + std::to_string(max_len));
  std::span<const int> content = token_ids;
  if (!content.empty() && content.front() == enc::Vocab::kCls) content = content.subspan(1);
  const int room = max_len - 1 - key.length();
  const int kept = std::min<int>(static_cast<int>(content.size()), room);

  std::vector<int> out;
  out.reserve(1 + static_cast<size_t>(key.length()) + kept);
  out.push_back(enc::Vocab::kCls);
  out.insert(out.end(), key.token_ids.begin(), key.token_ids.end());
  out.insert(out.end(), content.begin(), content.begin() + kept);
  return out;
}

std::vector<std::pair<std::string, Matrix*>> AdapterParams::named() {
  return {{"adapter_w_down", &w_down},
          {"adapter_b_down", &b_down},
          {"adapter_w_up", &w_up},
          {"adapter_b_up", &b_up}};
}

std::vector<std::pair<std::string, const Matrix*>> AdapterParams::named() const {
  auto mutable_named = const_cast<AdapterParams*>(this)->named();
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(mutable_named.size());
  for (auto& [name, m] : mutable_named) out.emplace_back(name, m);
  return out;
}

AdapterParams init_adapter(int dim, int bottleneck, uint64_t seed) {
  if (bottleneck < 1 || bottleneck >= dim)
    throw ValidationError("adapter: bottleneck " + std::to_string(bottleneck) +
                          " must be in [1, dim) with dim " + std::to_string(dim));
  Rng rng(seed);
  AdapterParams a;
  a.dim = dim;
  a.bottleneck = bottleneck;
  a.w_down = Matrix(dim, bottleneck);
  const double s = 1.0 / std::sqrt(static_cast<double>(dim));
  for (double& v : a.w_down.data) v = rng.uniform(-s, s);
  a.b_down = Matrix(1, bottleneck);
  a.w_up = Matrix(bottleneck, dim);
  a.b_up = Matrix(1, dim);
  return a;
}

size_t adapter_param_count(int dim, int bottleneck) {
  const auto d = static_cast<size_t>(dim), m = static_cast<size_t>(bottleneck);
  return d * m + m + m * d + d;
}

BoundAdapter BoundAdapter::bind(diff::Graph& g, const AdapterParams& p, bool trainable) {
  BoundAdapter b;
  b.dim = p.dim;
  b.bottleneck = p.bottleneck;
  b.w_down = g.leaf(p.w_down, trainable);
  b.b_down = g.leaf(p.b_down, trainable);
  b.w_up = g.leaf(p.w_up, trainable);
  b.b_up = g.leaf(p.b_up, trainable);
  return b;
}

BoundAdapter BoundAdapter::from_leaves(int dim, int bottleneck,
                                       std::span<const diff::Value> leaves) {
  if (leaves.size() != 4) throw std::invalid_argument("BoundAdapter: expected 4 leaves");
  BoundAdapter b;
  b.dim = dim;
  b.bottleneck = bottleneck;
  b.w_down = leaves[0];
  b.b_down = leaves[1];
  b.w_up = leaves[2];
  b.b_up = leaves[3];
  return b;
}

std::vector<diff::Value> BoundAdapter::leaves() const { return {w_down, b_down, w_up, b_up}; }

diff::Value adapter_forward(diff::Graph& g, const BoundAdapter& a, diff::Value x) {
  if (x.cols() != a.dim)
    throw std::invalid_argument("adapter_forward: input is " + x.value().shape_str() +
                                ", expected " + std::to_string(a.dim) + " columns");
  diff::Value hidden = g.relu(g.add_rowvec(g.matmul(x, a.w_down), a.b_down));
  return g.add(g.add_rowvec(g.matmul(hidden, a.w_up), a.b_up), x);
}

Matrix adapter_apply(const AdapterParams& a, const Matrix& x) {
  diff::Graph g;
  BoundAdapter bound = BoundAdapter::bind(g, a, false);
  return adapter_forward(g, bound, g.leaf(x, false)).value();
}

}  // namespace untl::keys
