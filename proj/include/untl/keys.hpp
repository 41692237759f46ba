#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "untl/encoder.hpp"
#include "untl/graph.hpp"
#include "untl/matrix.hpp"
#include "untl/vocab.hpp"

namespace untl::keys {

// Discrete secret key: a fixed token prefix inserted between CLS and the
// content tokens.
struct PromptKey {
  std::string text;
  std::vector<int> token_ids;  // no CLS, length >= 1

  int length() const { return static_cast<int>(token_ids.size()); }
};

// Tokenizes the key text. The key must fit in half the sequence budget so
// content always keeps some room.
PromptKey make_prompt_key(const std::string& text, const enc::Vocab& vocab, int max_len = 32);

// [CLS, P_1..P_m, x_1..x_n]; content is truncated from the right, the key
// never is. Accepts sequences with or without a leading CLS.
std::vector<int> prepend_prompt(const PromptKey& key, std::span<const int> token_ids,
                                int max_len);

// Bottleneck transform applied to each token embedding row, with a skip
// connection: up(relu(down(x))) + x.
struct AdapterParams {
  int dim = 0;
  int bottleneck = 0;
  Matrix w_down;  // d x m
  Matrix b_down;  // 1 x m
  Matrix w_up;    // m x d
  Matrix b_up;    // 1 x d

  std::vector<std::pair<std::string, Matrix*>> named();
  std::vector<std::pair<std::string, const Matrix*>> named() const;
};

// Zero up-projection makes the fresh adapter an exact identity while the
// random down-projection keeps gradients alive.
AdapterParams init_adapter(int dim, int bottleneck, uint64_t seed);

size_t adapter_param_count(int dim, int bottleneck);

struct BoundAdapter {
  int dim = 0;
  int bottleneck = 0;
  diff::Value w_down, b_down, w_up, b_up;

  static BoundAdapter bind(diff::Graph& g, const AdapterParams& p, bool trainable);
  static BoundAdapter from_leaves(int dim, int bottleneck, std::span<const diff::Value> leaves);
  std::vector<diff::Value> leaves() const;
};

// Applies the adapter to every row of x (n x d -> n x d).
diff::Value adapter_forward(diff::Graph& g, const BoundAdapter& a, diff::Value x);

// Plain-matrix convenience for a single vector.
Matrix adapter_apply(const AdapterParams& a, const Matrix& x);

}  // namespace untl::keys
