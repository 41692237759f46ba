#include "untl/objectives.hpp"

#include <cmath>
#include <stdexcept>

namespace untl::obj {

HyperParams HyperParams::defaults(Mode mode) {
  switch (mode) {
    case Mode::plain:
      return {.alpha = 0.0, .beta = 0.0, .lambda = 0.0, .clamp = 10.0, .omega = 1.0};
    case Mode::untl:
      return {.alpha = 0.0, .beta = 0.5, .lambda = 0.1, .clamp = 10.0, .omega = 1.0};
    case Mode::prompt:
      return {.alpha = 5.0, .beta = 2.0, .lambda = 0.1, .clamp = 10.0, .omega = 4.0};
    case Mode::adapter:
      return {.alpha = 10.0, .beta = 1.5, .lambda = 0.1, .clamp = 10.0, .omega = 2.0};
  }
  return {};
}

void HyperParams::validate(Mode mode) const {
  auto finite_pos = [](double v) { return std::isfinite(v) && v > 0.0; };
  auto finite_nonneg = [](double v) { return std::isfinite(v) && v >= 0.0; };
  if (!finite_pos(omega)) throw ValidationError("hyperparams: omega must be finite and > 0");
  if (!finite_pos(clamp)) throw ValidationError("hyperparams: clamp must be finite and > 0");
  if (!finite_nonneg(beta)) throw ValidationError("hyperparams: beta must be finite and >= 0");
  if (!finite_nonneg(lambda)) throw ValidationError("hyperparams: lambda must be finite and >= 0");
  if (mode == Mode::prompt || mode == Mode::adapter) {
    if (!finite_pos(alpha)) throw ValidationError("hyperparams: alpha must be finite and > 0");
  }
}

diff::Value rbf_kernel(diff::Graph& g, diff::Value z, diff::Value z2) {
  if (z.rows() != 1 || z2.rows() != 1 || z.cols() != z2.cols())
    throw std::invalid_argument("rbf_kernel: expected equal-length row vectors, got " +
                                z.value().shape_str() + " and " + z2.value().shape_str());
  diff::Value d = g.sub(z, z2);
  return g.exp(g.scalar_mul(g.sum(g.mul(d, d)), -1.0));
}

diff::Value rbf_gram(diff::Graph& g, diff::Value x, diff::Value y) {
  if (x.cols() != y.cols())
    throw std::invalid_argument("rbf_gram: dimension mismatch " + x.value().shape_str() +
                                " vs " + y.value().shape_str());
  // ||x_i - y_j||^2 = ||x_i||^2 + ||y_j||^2 - 2 <x_i, y_j>
  diff::Value cross = g.scalar_mul(g.matmul(x, g.transpose(y)), -2.0);
  diff::Value xsq = g.row_sum(g.mul(x, x));                  // n x 1
  diff::Value ysq = g.transpose(g.row_sum(g.mul(y, y)));     // 1 x m
  diff::Value dist2 = g.add_colvec(g.add_rowvec(cross, ysq), xsq);
  return g.exp(g.scalar_mul(dist2, -1.0));
}

diff::Value mmd_distance(diff::Graph& g, diff::Value s_feats, diff::Value t_feats) {
  if (s_feats.rows() < 1 || t_feats.rows() < 1)
    throw std::invalid_argument("mmd_distance: empty feature set");
  diff::Value ss = g.mean(rbf_gram(g, s_feats, s_feats));
  diff::Value tt = g.mean(rbf_gram(g, t_feats, t_feats));
  diff::Value st = g.mean(rbf_gram(g, s_feats, t_feats));
  return g.sub(g.add(ss, tt), g.scalar_mul(st, 2.0));
}

diff::Value clamped_neg(diff::Graph& g, diff::Value distance, double c) {
  if (c <= 0.0) throw std::invalid_argument("clamped_neg: bound must be positive");
  return g.scalar_mul(g.min_const(distance, c), -1.0);
}

diff::Value mmd_loss(diff::Graph& g, diff::Value s_feats, diff::Value t_feats, double c) {
  return clamped_neg(g, mmd_distance(g, s_feats, t_feats), c);
}

diff::Value ce_loss(diff::Graph& g, diff::Value logits, std::span<const int> labels,
                    double omega) {
  if (static_cast<int>(labels.size()) != logits.rows())
    throw std::invalid_argument("ce_loss: " + std::to_string(labels.size()) + " labels for " +
                                std::to_string(logits.rows()) + " logit rows");
  for (int y : labels)
    if (y < 0 || y >= logits.cols())
      throw std::invalid_argument("ce_loss: label " + std::to_string(y) +
                                  " out of range for " + std::to_string(logits.cols()) +
                                  " classes");
  diff::Value log_probs = g.pick(g.log_softmax_rows(logits),
                                 std::vector<int>(labels.begin(), labels.end()));
  return g.scalar_mul(g.mean(log_probs), -omega);
}

diff::Value dc_loss(diff::Graph& g, const enc::BoundEncoder& p, diff::Value src_like_feats,
                    diff::Value tgt_feats) {
  if (src_like_feats.rows() < 1 || tgt_feats.rows() < 1)
    throw std::invalid_argument("dc_loss: empty feature set");
  diff::Value src_logits = enc::domain_logits(g, p, src_like_feats);
  diff::Value tgt_logits = enc::domain_logits(g, p, tgt_feats);
  const std::vector<int> zeros(static_cast<size_t>(src_like_feats.rows()), 0);
  const std::vector<int> ones(static_cast<size_t>(tgt_feats.rows()), 1);
  return g.add(ce_loss(g, src_logits, zeros, 1.0), ce_loss(g, tgt_logits, ones, 1.0));
}

diff::Value key_mmd_loss(diff::Graph& g, diff::Value key_feats, diff::Value s_feats,
                         diff::Value t_feats, double alpha, double c) {
  diff::Value attract = g.scalar_mul(mmd_distance(g, key_feats, s_feats), alpha);
  return g.add(attract, mmd_loss(g, s_feats, t_feats, c));
}

namespace {

void require_labels(const TokenBatch& src, const char* what) {
  if (src.labels.size() != src.sequences.size())
    throw std::invalid_argument(std::string(what) + ": source batch must be fully labeled (" +
                                std::to_string(src.labels.size()) + " labels for " +
                                std::to_string(src.sequences.size()) + " sequences)");
}

}  // namespace

ObjectiveTerms plain_objective(diff::Graph& g, const enc::BoundEncoder& p, const TokenBatch& src,
                               const HyperParams& hp) {
  require_labels(src, "plain_objective");
  ObjectiveTerms t;
  diff::Value s_feats = enc::encode_batch(g, p, src.sequences);
  t.task_ce = ce_loss(g, enc::classify(g, p, s_feats), src.labels, hp.omega);
  t.total = t.task_ce;
  return t;
}

ObjectiveTerms untl_objective(diff::Graph& g, const enc::BoundEncoder& p, const TokenBatch& src,
                              const TokenBatch& tgt, const HyperParams& hp, Ablation ablation) {
  require_labels(src, "untl_objective");
  ObjectiveTerms t;
  diff::Value s_feats = enc::encode_batch(g, p, src.sequences);
  diff::Value t_feats = enc::encode_batch(g, p, tgt.sequences);
  t.task_ce = ce_loss(g, enc::classify(g, p, s_feats), src.labels, hp.omega);
  t.total = t.task_ce;
  if (!ablation.disable_dc && hp.beta != 0.0) {
    t.dc = dc_loss(g, p, s_feats, t_feats);
    t.total = g.add(t.total, g.scalar_mul(t.dc, hp.beta));
  }
  if (!ablation.disable_mmd && hp.lambda != 0.0) {
    t.mmd = mmd_loss(g, s_feats, t_feats, hp.clamp);
    t.total = g.add(t.total, g.scalar_mul(t.mmd, hp.lambda));
  }
  return t;
}

ObjectiveTerms prompt_objective(diff::Graph& g, const enc::BoundEncoder& p,
                                const keys::PromptKey& key, const TokenBatch& src,
                                const TokenBatch& tgt, const HyperParams& hp,
                                Ablation ablation) {
  require_labels(src, "prompt_objective");
  ObjectiveTerms t;
  diff::Value s_feats = enc::encode_batch(g, p, src.sequences);
  diff::Value t_feats = enc::encode_batch(g, p, tgt.sequences);

  std::vector<std::vector<int>> keyed;
  keyed.reserve(tgt.sequences.size());
  for (const auto& seq : tgt.sequences)
    keyed.push_back(keys::prepend_prompt(key, seq, p.cfg.max_len));
  diff::Value k_feats = enc::encode_batch(g, p, keyed);

  t.task_ce = ce_loss(g, enc::classify(g, p, s_feats), src.labels, hp.omega);
  t.total = t.task_ce;
  if (!ablation.disable_dc && hp.beta != 0.0) {
    std::vector<diff::Value> src_like = {k_feats, s_feats};
    t.dc = dc_loss(g, p, g.concat_rows(src_like), t_feats);
    t.total = g.add(t.total, g.scalar_mul(t.dc, hp.beta));
  }
  if (!ablation.disable_mmd && hp.lambda != 0.0) {
    t.mmd = key_mmd_loss(g, k_feats, s_feats, t_feats, hp.alpha, hp.clamp);
    t.total = g.add(t.total, g.scalar_mul(t.mmd, hp.lambda));
  }
  return t;
}

diff::Value adapter_ce_loss(diff::Graph& g, const enc::BoundEncoder& p,
                            const keys::BoundAdapter& adapter, const TokenBatch& src,
                            double omega) {
  require_labels(src, "adapter_ce_loss");
  diff::Value feats = enc::encode_batch(g, p, src.sequences, &adapter);
  return ce_loss(g, enc::classify(g, p, feats), src.labels, omega);
}

ObjectiveTerms adapter_objective(diff::Graph& g, const enc::BoundEncoder& p,
                                 const keys::BoundAdapter& adapter, const TokenBatch& src,
                                 const TokenBatch& tgt, const HyperParams& hp,
                                 Ablation ablation) {
  require_labels(src, "adapter_objective");
  ObjectiveTerms t;
  diff::Value s_feats = enc::encode_batch(g, p, src.sequences);
  diff::Value t_feats = enc::encode_batch(g, p, tgt.sequences);
  diff::Value a_feats = enc::encode_batch(g, p, tgt.sequences, &adapter);

  t.task_ce = ce_loss(g, enc::classify(g, p, s_feats), src.labels, hp.omega);
  t.key_ce = adapter_ce_loss(g, p, adapter, src, hp.omega);
  t.total = g.add(t.task_ce, t.key_ce);
  if (!ablation.disable_dc && hp.beta != 0.0) {
    std::vector<diff::Value> src_like = {a_feats, s_feats};
    t.dc = dc_loss(g, p, g.concat_rows(src_like), t_feats);
    t.total = g.add(t.total, g.scalar_mul(t.dc, hp.beta));
  }
  if (!ablation.disable_mmd && hp.lambda != 0.0) {
    t.mmd = key_mmd_loss(g, a_feats, s_feats, t_feats, hp.alpha, hp.clamp);
    t.total = g.add(t.total, g.scalar_mul(t.mmd, hp.lambda));
  }
  return t;
}

double mmd_distance_value(const Matrix& s_feats, const Matrix& t_feats) {
  diff::Graph g;
  return mmd_distance(g, g.leaf(s_feats), g.leaf(t_feats)).scalar();
}

double chunked_mmd(const Matrix& s_feats, const Matrix& t_feats, int chunk) {
  if (s_feats.rows < 1 || t_feats.rows < 1)
    throw std::invalid_argument("chunked_mmd: empty feature set");
  if (chunk < 1) throw std::invalid_argument("chunked_mmd: chunk must be >= 1");
  const int ns = (s_feats.rows + chunk - 1) / chunk;
  const int nt = (t_feats.rows + chunk - 1) / chunk;
  const int pairs = std::min(ns, nt);
  double acc = 0.0;
  for (int i = 0; i < pairs; ++i) {
    diff::Graph g;
    diff::Value s = g.leaf(s_feats);
    diff::Value t = g.leaf(t_feats);
    diff::Value s_chunk = g.slice_rows(s, i * chunk, std::min(s_feats.rows, (i + 1) * chunk));
    diff::Value t_chunk = g.slice_rows(t, i * chunk, std::min(t_feats.rows, (i + 1) * chunk));
    acc += mmd_distance(g, s_chunk, t_chunk).scalar();
  }
  return acc / pairs;
}

}  // namespace untl::obj
