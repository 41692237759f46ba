#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "untl/graph.hpp"
#include "untl/matrix.hpp"
#include "untl/vocab.hpp"

namespace untl::keys {
struct BoundAdapter;  // keys.hpp
}

namespace untl::enc {

struct EncoderConfig {
  int vocab_size = 0;
  int dim = 64;
  int max_len = 32;
  int classes = 3;
  int ffn_dim() const { return 4 * dim; }
};

// Feature extractor weights: token embeddings, one self-attention block with
// a position-wise feed-forward, plus the task and domain heads. No biases
// inside the extractor, so all-zero weights map every input to the zero
// feature vector.
struct EncoderParams {
  EncoderConfig cfg;
  Matrix embedding;        // vocab x d
  Matrix w_q, w_k, w_v;    // d x d
  Matrix w_o;              // d x d
  Matrix w_ff1;            // d x 4d
  Matrix w_ff2;            // 4d x d
  Matrix w_cls, b_cls;     // d x classes, 1 x classes
  Matrix w_dc, b_dc;       // d x 2, 1 x 2

  static EncoderParams init(const EncoderConfig& cfg, uint64_t seed);
  static EncoderParams zeros(const EncoderConfig& cfg);

  // Fixed serialization / optimization order.
  std::vector<std::pair<std::string, Matrix*>> named();
  std::vector<std::pair<std::string, const Matrix*>> named() const;
};

// Parameter leaves bound into one graph for a training or evaluation step.
struct BoundEncoder {
  EncoderConfig cfg;
  diff::Value embedding, w_q, w_k, w_v, w_o, w_ff1, w_ff2, w_cls, b_cls, w_dc, b_dc;

  static BoundEncoder bind(diff::Graph& g, const EncoderParams& p, bool trainable);
  // Rebind from pre-made leaves in EncoderParams::named() order.
  static BoundEncoder from_leaves(const EncoderConfig& cfg, std::span<const diff::Value> leaves);

  std::vector<diff::Value> leaves() const;
};

// CLS feature of one token sequence: embedding lookup, scaled dot-product
// self-attention with residual, feed-forward with residual, row 0. When an
// adapter is given it transforms every token embedding before attention.
diff::Value encode(diff::Graph& g, const BoundEncoder& p, std::span<const int> token_ids,
                   const keys::BoundAdapter* adapter = nullptr);

// Stacks per-example CLS features into a (batch x d) matrix.
diff::Value encode_batch(diff::Graph& g, const BoundEncoder& p,
                         const std::vector<std::vector<int>>& sequences,
                         const keys::BoundAdapter* adapter = nullptr);

// Task logits; no softmax applied.
diff::Value classify(diff::Graph& g, const BoundEncoder& p, diff::Value features);

// Domain logits (index 0 = source, 1 = target).
diff::Value domain_logits(diff::Graph& g, const BoundEncoder& p, diff::Value features);

// Argmax with ties broken toward the lowest index.
int argmax_row(const Matrix& m, int row);

}  // namespace untl::enc
