#pragma once

#include <span>
#include <vector>

#include "untl/common.hpp"
#include "untl/encoder.hpp"
#include "untl/graph.hpp"
#include "untl/keys.hpp"

namespace untl::obj {

// Loss weights. `alpha` pulls the key domain onto the source, `beta` weighs
// the domain classifier, `lambda` the domain-distance term, `clamp` bounds
// that distance, `omega` scales every task cross-entropy term.
struct HyperParams {
  double alpha = 0.0;
  double beta = 0.5;
  double lambda = 0.1;
  double clamp = 10.0;
  double omega = 1.0;

  static HyperParams defaults(Mode mode);
  void validate(Mode mode) const;
};

// One domain's worth of examples, already tokenized. Labels may be empty
// (unlabeled target batches).
struct TokenBatch {
  std::vector<std::vector<int>> sequences;
  std::vector<int> labels;

  size_t size() const { return sequences.size(); }
};

// exp(-||z - z'||^2) for two row vectors.
diff::Value rbf_kernel(diff::Graph& g, diff::Value z, diff::Value z2);

// Pairwise kernel matrix between the rows of x (n x d) and y (m x d).
diff::Value rbf_gram(diff::Graph& g, diff::Value x, diff::Value y);

// Biased V-statistic estimate of the squared kernel mean discrepancy:
// mean k(s,s') + mean k(t,t') - 2 mean k(s,t). Symmetric and >= 0.
diff::Value mmd_distance(diff::Graph& g, diff::Value s_feats, diff::Value t_feats);

// -min(c, d): rewards pushing d up to the bound, flat beyond it.
diff::Value clamped_neg(diff::Graph& g, diff::Value distance, double c);
diff::Value mmd_loss(diff::Graph& g, diff::Value s_feats, diff::Value t_feats, double c);

// omega * mean cross entropy of logits against labels.
diff::Value ce_loss(diff::Graph& g, diff::Value logits, std::span<const int> labels,
                    double omega);

// Domain-classification loss: mean CE with label 0 over the source-like rows
// plus mean CE with label 1 over the target rows. Gradients flow into the
// head and the extractor alike.
diff::Value dc_loss(diff::Graph& g, const enc::BoundEncoder& p, diff::Value src_like_feats,
                    diff::Value tgt_feats);

// alpha * d(key, source) - min(c, d(source, target)).
diff::Value key_mmd_loss(diff::Graph& g, diff::Value key_feats, diff::Value s_feats,
                         diff::Value t_feats, double alpha, double c);

// Scalar terms of a composite objective; undefined handles mean the term is
// not part of the mode or was ablated.
struct ObjectiveTerms {
  diff::Value total;
  diff::Value task_ce;
  diff::Value key_ce;   // adapter mode only
  diff::Value dc;
  diff::Value mmd;      // distance term as it enters the objective
};

struct Ablation {
  bool disable_mmd = false;
  bool disable_dc = false;
};

// omega*CE(S) [+ beta*DC(S,T) + lambda*(-min(c, d(S,T)))]. Pass an unlabeled
// target batch; with both terms ablated this is the plain task loss.
ObjectiveTerms untl_objective(diff::Graph& g, const enc::BoundEncoder& p, const TokenBatch& src,
                              const TokenBatch& tgt, const HyperParams& hp,
                              Ablation ablation = {});

// Plain task loss on the source batch only.
ObjectiveTerms plain_objective(diff::Graph& g, const enc::BoundEncoder& p, const TokenBatch& src,
                               const HyperParams& hp);

// Prompt-key objective: CE on raw source, DC over [key, source] vs target,
// and the key-aware distance term. Key features come from target inputs with
// the prompt prefix.
ObjectiveTerms prompt_objective(diff::Graph& g, const enc::BoundEncoder& p,
                                const keys::PromptKey& key, const TokenBatch& src,
                                const TokenBatch& tgt, const HyperParams& hp,
                                Ablation ablation = {});

// omega-scaled CE of source examples routed through the adapter; keeps the
// adapter task-preserving.
diff::Value adapter_ce_loss(diff::Graph& g, const enc::BoundEncoder& p,
                            const keys::BoundAdapter& adapter, const TokenBatch& src,
                            double omega);

// Adapter-key objective: both CE terms, DC over [adapted-target, source] vs
// target, and the key-aware distance term.
ObjectiveTerms adapter_objective(diff::Graph& g, const enc::BoundEncoder& p,
                                 const keys::BoundAdapter& adapter, const TokenBatch& src,
                                 const TokenBatch& tgt, const HyperParams& hp,
                                 Ablation ablation = {});

// Plain-double MMD between two feature matrices (no gradients); used for
// the evaluation-time divergence diagnostic, chunked to bound the quadratic
// kernel cost.
double mmd_distance_value(const Matrix& s_feats, const Matrix& t_feats);
double chunked_mmd(const Matrix& s_feats, const Matrix& t_feats, int chunk = 64);

}  // namespace untl::obj
