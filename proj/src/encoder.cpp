#include "untl/encoder.hpp"

#include <cmath>
#include <stdexcept>

#include "untl/keys.hpp"
#include "untl/rng.hpp"

namespace untl::enc {

namespace {

Matrix uniform_init(int rows, int cols, double scale, Rng& rng) {
  Matrix m(rows, cols);
  for (double& v : m.data) v = rng.uniform(-scale, scale);
  return m;
}

}  // namespace

EncoderParams EncoderParams::init(const EncoderConfig& cfg, uint64_t seed) {
  if (cfg.vocab_size <= 0 || cfg.dim <= 0 || cfg.classes <= 0 || cfg.max_len <= 1)
    throw std::invalid_argument("EncoderParams: bad config");
  Rng rng(seed);
  const double s = 1.0 / std::sqrt(static_cast<double>(cfg.dim));
  EncoderParams p;
  p.cfg = cfg;
  p.embedding = uniform_init(cfg.vocab_size, cfg.dim, s, rng);
  p.w_q = uniform_init(cfg.dim, cfg.dim, s, rng);
  p.w_k = uniform_init(cfg.dim, cfg.dim, s, rng);
  p.w_v = uniform_init(cfg.dim, cfg.dim, s, rng);
  p.w_o = uniform_init(cfg.dim, cfg.dim, s, rng);
  p.w_ff1 = uniform_init(cfg.dim, cfg.ffn_dim(), s, rng);
  p.w_ff2 = uniform_init(cfg.ffn_dim(), cfg.dim, 1.0 / std::sqrt(static_cast<double>(cfg.ffn_dim())), rng);
  p.w_cls = uniform_init(cfg.dim, cfg.classes, s, rng);
  p.b_cls = Matrix(1, cfg.classes);
  p.w_dc = uniform_init(cfg.dim, 2, s, rng);
  p.b_dc = Matrix(1, 2);
  return p;
}

EncoderParams EncoderParams::zeros(const EncoderConfig& cfg) {
  EncoderParams p;
  p.cfg = cfg;
  p.embedding = Matrix(cfg.vocab_size, cfg.dim);
  p.w_q = Matrix(cfg.dim, cfg.dim);
  p.w_k = Matrix(cfg.dim, cfg.dim);
  p.w_v = Matrix(cfg.dim, cfg.dim);
  p.w_o = Matrix(cfg.dim, cfg.dim);
  p.w_ff1 = Matrix(cfg.dim, cfg.ffn_dim());
  p.w_ff2 = Matrix(cfg.ffn_dim(), cfg.dim);
  p.w_cls = Matrix(cfg.dim, cfg.classes);
  p.b_cls = Matrix(1, cfg.classes);
  p.w_dc = Matrix(cfg.dim, 2);
  p.b_dc = Matrix(1, 2);
  return p;
}

std::vector<std::pair<std::string, Matrix*>> EncoderParams::named() {
  return {{"embedding", &embedding}, {"w_q", &w_q},     {"w_k", &w_k},
          {"w_v", &w_v},             {"w_o", &w_o},     {"w_ff1", &w_ff1},
          {"w_ff2", &w_ff2},         {"w_cls", &w_cls}, {"b_cls", &b_cls},
          {"w_dc", &w_dc},           {"b_dc", &b_dc}};
}

std::vector<std::pair<std::string, const Matrix*>> EncoderParams::named() const {
  auto mutable_named = const_cast<EncoderParams*>(this)->named();
  std::vector<std::pair<std::string, const Matrix*>> out;
  out.reserve(mutable_named.size());
  for (auto& [name, m] : mutable_named) out.emplace_back(name, m);
  return out;
}

BoundEncoder BoundEncoder::bind(diff::Graph& g, const EncoderParams& p, bool trainable) {
  BoundEncoder b;
  b.cfg = p.cfg;
  b.embedding = g.leaf(p.embedding, trainable);
  b.w_q = g.leaf(p.w_q, trainable);
  b.w_k = g.leaf(p.w_k, trainable);
  b.w_v = g.leaf(p.w_v, trainable);
  b.w_o = g.leaf(p.w_o, trainable);
  b.w_ff1 = g.leaf(p.w_ff1, trainable);
  b.w_ff2 = g.leaf(p.w_ff2, trainable);
  b.w_cls = g.leaf(p.w_cls, trainable);
  b.b_cls = g.leaf(p.b_cls, trainable);
  b.w_dc = g.leaf(p.w_dc, trainable);
  b.b_dc = g.leaf(p.b_dc, trainable);
  return b;
}

BoundEncoder BoundEncoder::from_leaves(const EncoderConfig& cfg,
                                       std::span<const diff::Value> leaves) {
  if (leaves.size() != 11) throw std::invalid_argument("BoundEncoder: expected 11 leaves");
  BoundEncoder b;
  b.cfg = cfg;
  b.embedding = leaves[0];
  b.w_q = leaves[1];
  b.w_k = leaves[2];
  b.w_v = leaves[3];
  b.w_o = leaves[4];
  b.w_ff1 = leaves[5];
  b.w_ff2 = leaves[6];
  b.w_cls = leaves[7];
  b.b_cls = leaves[8];
  b.w_dc = leaves[9];
  b.b_dc = leaves[10];
  return b;
}

std::vector<diff::Value> BoundEncoder::leaves() const {
  return {embedding, w_q, w_k, w_v, w_o, w_ff1, w_ff2, w_cls, b_cls, w_dc, b_dc};
}

diff::Value encode(diff::Graph& g, const BoundEncoder& p, std::span<const int> token_ids,
                   const keys::BoundAdapter* adapter) {
  if (token_ids.empty()) throw std::invalid_argument("encode: empty token sequence");
  for (int id : token_ids)
    if (id < 0 || id >= p.embedding.rows())
      throw std::invalid_argument("encode: token id " + std::to_string(id) +
                                  " out of range for vocab of " +
                                  std::to_string(p.embedding.rows()));

  diff::Value x = g.gather_rows(p.embedding, std::vector<int>(token_ids.begin(), token_ids.end()));
  if (adapter) x = keys::adapter_forward(g, *adapter, x);

  diff::Value q = g.matmul(x, p.w_q);
  diff::Value k = g.matmul(x, p.w_k);
  diff::Value v = g.matmul(x, p.w_v);
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.cfg.dim));
  diff::Value attn = g.softmax_rows(g.scalar_mul(g.matmul(q, g.transpose(k)), scale));
  diff::Value h1 = g.add(x, g.matmul(g.matmul(attn, v), p.w_o));
  diff::Value h2 = g.add(h1, g.matmul(g.relu(g.matmul(h1, p.w_ff1)), p.w_ff2));
  return g.slice_rows(h2, 0, 1);
}

diff::Value encode_batch(diff::Graph& g, const BoundEncoder& p,
                         const std::vector<std::vector<int>>& sequences,
                         const keys::BoundAdapter* adapter) {
  if (sequences.empty()) throw std::invalid_argument("encode_batch: empty batch");
  std::vector<diff::Value> features;
  features.reserve(sequences.size());
  for (const auto& seq : sequences) features.push_back(encode(g, p, seq, adapter));
  return g.concat_rows(features);
}

diff::Value classify(diff::Graph& g, const BoundEncoder& p, diff::Value features) {
  if (features.cols() != p.cfg.dim)
    throw std::invalid_argument("classify: features are " + features.value().shape_str() +
                                ", expected dim " + std::to_string(p.cfg.dim));
  return g.add_rowvec(g.matmul(features, p.w_cls), p.b_cls);
}

diff::Value domain_logits(diff::Graph& g, const BoundEncoder& p, diff::Value features) {
  if (features.cols() != p.cfg.dim)
    throw std::invalid_argument("domain_logits: features are " + features.value().shape_str() +
                                ", expected dim " + std::to_string(p.cfg.dim));
  return g.add_rowvec(g.matmul(features, p.w_dc), p.b_dc);
}

int argmax_row(const Matrix& m, int row) {
  int best = 0;
  for (int j = 1; j < m.cols; ++j)
    if (m.at(row, j) > m.at(row, best)) best = j;
  return best;
}

}  // namespace untl::enc
