#include "untl/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "untl/grad_check.hpp"

namespace untl::training {

using nlohmann::json;

bool present(double v) { return !std::isnan(v); }

Adam::Adam(std::vector<Matrix*> params, std::vector<double> rates, double beta1, double beta2,
           double epsilon)
    : params_(std::move(params)),
      rates_(std::move(rates)),
      beta1_(beta1),
      beta2_(beta2),
      epsilon_(epsilon) {
  if (params_.size() != rates_.size())
    throw std::invalid_argument("Adam: one rate per parameter block required");
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (Matrix* p : params_) {
    m_.emplace_back(p->rows, p->cols);
    v_.emplace_back(p->rows, p->cols);
  }
}

void Adam::step(const std::vector<Matrix>& grads) {
  if (grads.size() != params_.size())
    throw std::invalid_argument("Adam: gradient count mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (size_t b = 0; b < params_.size(); ++b) {
    Matrix& p = *params_[b];
    const Matrix& g = grads[b];
    if (!p.same_shape(g))
      throw std::invalid_argument("Adam: gradient shape " + g.shape_str() +
                                  " does not match parameter " + p.shape_str());
    const double lr = rates_[b];
    for (size_t i = 0; i < p.numel(); ++i) {
      const double gi = g.data[i];
      if (!std::isfinite(gi))
        throw RuntimeAbort("Adam: non-finite gradient at optimizer step " + std::to_string(t_));
      m_[b].data[i] = beta1_ * m_[b].data[i] + (1.0 - beta1_) * gi;
      v_[b].data[i] = beta2_ * v_[b].data[i] + (1.0 - beta2_) * gi * gi;
      const double mhat = m_[b].data[i] / bc1;
      const double vhat = v_[b].data[i] / bc2;
      p.data[i] -= lr * mhat / (std::sqrt(vhat) + epsilon_);
    }
  }
}

double selection_score(Mode mode, double acc_source, double acc_target, double acc_key) {
  switch (mode) {
    case Mode::plain:
      return acc_source;
    case Mode::untl:
      if (!present(acc_target)) throw ValidationError("selection_score: missing target accuracy");
      return acc_source - acc_target;
    case Mode::prompt:
    case Mode::adapter:
      if (!present(acc_target)) throw ValidationError("selection_score: missing target accuracy");
      if (!present(acc_key))
        throw ValidationError("selection_score: key modes need the keyed-target accuracy");
      return acc_source + acc_key - 2.0 * acc_target;
  }
  throw ValidationError("selection_score: bad mode");
}

json EvalReport::to_json() const {
  json j;
  j["step"] = step;
  auto put = [&j](const char* key, double v) {
    if (present(v))
      j[key] = v;
    else
      j[key] = nullptr;
  };
  put("acc_source", acc_source);
  put("acc_target", acc_target);
  put("acc_key", acc_key);
  put("err_source", err_source);
  put("err_target", err_target);
  put("mmd_st", mmd_st);
  put("score", score);
  put("loss", loss_total);
  put("loss_ce", loss_ce);
  put("loss_dc", loss_dc);
  put("loss_mmd", loss_mmd);
  return j;
}

void save_history(const std::vector<EvalReport>& history, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("history: cannot write " + path);
  for (const auto& rep : history) out << rep.to_json().dump() << '\n';
  if (!out) throw RuntimeAbort("history: write failed for " + path);
}

Matrix extract_features(const enc::EncoderParams& params,
                        const std::vector<std::vector<int>>& sequences,
                        const keys::AdapterParams* adapter) {
  diff::Graph g;
  enc::BoundEncoder bound = enc::BoundEncoder::bind(g, params, false);
  std::optional<keys::BoundAdapter> bound_adapter;
  if (adapter) bound_adapter = keys::BoundAdapter::bind(g, *adapter, false);
  return enc::encode_batch(g, bound, sequences, adapter ? &*bound_adapter : nullptr).value();
}

namespace {

double accuracy_from_features(const enc::EncoderParams& params, const Matrix& features,
                              const std::vector<int>& labels) {
  diff::Graph g;
  enc::BoundEncoder bound = enc::BoundEncoder::bind(g, params, false);
  const Matrix logits = enc::classify(g, bound, g.leaf(features)).value();
  int correct = 0;
  for (int i = 0; i < logits.rows; ++i)
    if (enc::argmax_row(logits, i) == labels[static_cast<size_t>(i)]) ++correct;
  return static_cast<double>(correct) / logits.rows;
}

std::vector<std::vector<int>> with_prompt(const keys::PromptKey& key,
                                          const std::vector<std::vector<int>>& sequences,
                                          int max_len) {
  std::vector<std::vector<int>> out;
  out.reserve(sequences.size());
  for (const auto& seq : sequences) out.push_back(keys::prepend_prompt(key, seq, max_len));
  return out;
}

struct ParamBlocks {
  std::vector<Matrix*> matrices;
  std::vector<double> rates;
};

ParamBlocks collect_blocks(enc::EncoderParams& params, keys::AdapterParams* adapter,
                           const LearningRates& lr) {
  ParamBlocks blocks;
  for (auto& [name, m] : params.named()) {
    blocks.matrices.push_back(m);
    double rate = lr.extractor;
    if (name == "w_cls" || name == "b_cls") rate = lr.task_head;
    if (name == "w_dc" || name == "b_dc") rate = lr.domain_head;
    blocks.rates.push_back(rate);
  }
  if (adapter)
    for (auto& [name, m] : adapter->named()) {
      blocks.matrices.push_back(m);
      blocks.rates.push_back(lr.adapter);
    }
  return blocks;
}

}  // namespace

Dataset load_dataset(const std::string& dir, const TrainConfig& cfg) {
  namespace fs = std::filesystem;
  const fs::path base(dir);
  const fs::path vocab_path = base / "vocab.txt";
  if (!fs::exists(vocab_path))
    throw ValidationError("dataset: missing " + vocab_path.string());

  Dataset ds;
  ds.vocab = enc::Vocab::load(vocab_path.string());
  auto load_split = [&](const char* name) {
    const fs::path p = base / name;
    if (!fs::exists(p)) throw ValidationError("dataset: missing " + p.string());
    return tokenize_corpus(data::load_corpus(p.string(), cfg.classes), ds.vocab, cfg.max_len);
  };
  ds.source_train = load_split("source_train.jsonl");
  ds.source_dev = load_split("source_dev.jsonl");

  const bool need_target = cfg.mode != Mode::plain;
  const bool have_target = fs::exists(base / "target_train.jsonl");
  if (need_target && !have_target)
    throw ValidationError("dataset: mode '" + std::string(mode_name(cfg.mode)) +
                          "' needs target_train.jsonl in " + dir);
  if (have_target) {
    ds.target_train = load_split("target_train.jsonl");
    ds.target_dev = load_split("target_dev.jsonl");
  }
  return ds;
}

namespace {

EvalReport evaluate_dev(const TrainConfig& cfg, const enc::EncoderParams& params,
                        const keys::AdapterParams* adapter, const keys::PromptKey* prompt,
                        const Dataset& ds, int step) {
  EvalReport rep;
  rep.step = step;

  const Matrix s_feats = extract_features(params, ds.source_dev.sequences);
  rep.acc_source = accuracy_from_features(params, s_feats, ds.source_dev.labels);
  rep.err_source = 1.0 - rep.acc_source;

  if (ds.target_dev) {
    const Matrix t_feats = extract_features(params, ds.target_dev->sequences);
    rep.acc_target = accuracy_from_features(params, t_feats, ds.target_dev->labels);
    rep.err_target = 1.0 - rep.acc_target;
    rep.mmd_st = obj::chunked_mmd(s_feats, t_feats);
    if (cfg.mode == Mode::prompt) {
      const Matrix k_feats = extract_features(
          params, with_prompt(*prompt, ds.target_dev->sequences, cfg.max_len));
      rep.acc_key = accuracy_from_features(params, k_feats, ds.target_dev->labels);
    } else if (cfg.mode == Mode::adapter) {
      const Matrix a_feats = extract_features(params, ds.target_dev->sequences, adapter);
      rep.acc_key = accuracy_from_features(params, a_feats, ds.target_dev->labels);
    }
  }
  rep.score = selection_score(cfg.mode, rep.acc_source, rep.acc_target, rep.acc_key);
  return rep;
}

}  // namespace

TrainResult train(const TrainConfig& cfg, const Dataset& dataset) {
  cfg.validate();
  if (!dataset.source_train.fully_labeled() || !dataset.source_dev.fully_labeled())
    throw ValidationError("train: source corpora must be fully labeled");
  if (cfg.mode != Mode::plain && !dataset.target_train)
    throw ValidationError("train: mode needs a target train corpus");
  if (dataset.target_dev && !dataset.target_dev->fully_labeled())
    throw ValidationError("train: target dev corpus must be labeled for evaluation");

  enc::EncoderConfig ec;
  ec.vocab_size = dataset.vocab.size();
  ec.dim = cfg.dim;
  ec.max_len = cfg.max_len;
  ec.classes = cfg.classes;

  Rng rng(cfg.seed);
  enc::EncoderParams params = enc::EncoderParams::init(ec, rng.next_u64());
  std::optional<keys::AdapterParams> adapter;
  if (cfg.mode == Mode::adapter)
    adapter = keys::init_adapter(cfg.dim, cfg.adapter_bottleneck, rng.next_u64());
  std::optional<keys::PromptKey> prompt;
  if (cfg.mode == Mode::prompt)
    prompt = keys::make_prompt_key(cfg.prompt_key, dataset.vocab, cfg.max_len);

  ParamBlocks blocks = collect_blocks(params, adapter ? &*adapter : nullptr, cfg.lr);
  Adam optimizer(blocks.matrices, blocks.rates);

  data::PairedBatches stream(dataset.source_train,
                             cfg.mode == Mode::plain ? nullptr : &*dataset.target_train,
                             cfg.batch_size, rng.next_u64(), cfg.epochs);

  TrainResult result;
  double best = -std::numeric_limits<double>::infinity();
  enc::EncoderParams best_params = params;
  std::optional<keys::AdapterParams> best_adapter = adapter;
  int best_step = 0;

  obj::TokenBatch src, tgt;
  int step = 0;
  const int total_steps = stream.total_steps();
  while (stream.next(src, tgt)) {
    ++step;
    diff::Graph g;
    enc::BoundEncoder bound = enc::BoundEncoder::bind(g, params, true);
    std::optional<keys::BoundAdapter> bound_adapter;
    if (adapter) bound_adapter = keys::BoundAdapter::bind(g, *adapter, true);

    obj::ObjectiveTerms terms;
    switch (cfg.mode) {
      case Mode::plain:
        terms = obj::plain_objective(g, bound, src, cfg.hp);
        break;
      case Mode::untl:
        terms = obj::untl_objective(g, bound, src, tgt, cfg.hp, cfg.ablate);
        break;
      case Mode::prompt:
        terms = obj::prompt_objective(g, bound, *prompt, src, tgt, cfg.hp, cfg.ablate);
        break;
      case Mode::adapter:
        terms = obj::adapter_objective(g, bound, *bound_adapter, src, tgt, cfg.hp, cfg.ablate);
        break;
    }
    const double loss = terms.total.scalar();
    if (!std::isfinite(loss))
      throw RuntimeAbort("train: non-finite loss at step " + std::to_string(step));
    g.backward(terms.total);

    std::vector<Matrix> grads;
    grads.reserve(blocks.matrices.size());
    std::vector<diff::Value> leaves = bound.leaves();
    if (bound_adapter) {
      auto extra = bound_adapter->leaves();
      leaves.insert(leaves.end(), extra.begin(), extra.end());
    }
    for (diff::Value leaf : leaves) grads.push_back(leaf.grad());
    optimizer.step(grads);

    if (step % cfg.eval_every == 0 || step == total_steps) {
      EvalReport rep = evaluate_dev(cfg, params, adapter ? &*adapter : nullptr,
                                    prompt ? &*prompt : nullptr, dataset, step);
      rep.loss_total = loss;
      rep.loss_ce = terms.task_ce.defined() ? terms.task_ce.scalar() : kMissing;
      rep.loss_dc = terms.dc.defined() ? terms.dc.scalar() : kMissing;
      rep.loss_mmd = terms.mmd.defined() ? terms.mmd.scalar() : kMissing;
      result.history.push_back(rep);
      if (rep.score > best) {
        best = rep.score;
        best_params = params;
        best_adapter = adapter;
        best_step = step;
      }
    }
  }

  Checkpoint ck;
  ck.config = cfg;
  ck.vocab = dataset.vocab;
  ck.params = std::move(best_params);
  ck.adapter = std::move(best_adapter);
  ck.prompt_key_text = cfg.mode == Mode::prompt ? cfg.prompt_key : std::string();
  ck.best_score = best;
  ck.best_step = best_step;
  result.checkpoint = std::move(ck);
  return result;
}

double evaluate_accuracy(const Checkpoint& ck, const data::TokenizedCorpus& corpus,
                         bool with_key) {
  if (corpus.size() == 0) throw ValidationError("evaluate: empty corpus");
  if (!corpus.fully_labeled())
    throw ValidationError("evaluate: corpus must be labeled");
  if (with_key && ck.config.mode != Mode::prompt && ck.config.mode != Mode::adapter)
    throw ValidationError("evaluate: checkpoint mode '" +
                          std::string(mode_name(ck.config.mode)) + "' has no secret key");

  Matrix feats;
  if (with_key && ck.config.mode == Mode::prompt) {
    const keys::PromptKey key =
        keys::make_prompt_key(ck.prompt_key_text, ck.vocab, ck.config.max_len);
    feats = extract_features(ck.params, with_prompt(key, corpus.sequences, ck.config.max_len));
  } else if (with_key && ck.config.mode == Mode::adapter) {
    feats = extract_features(ck.params, corpus.sequences, &*ck.adapter);
  } else {
    feats = extract_features(ck.params, corpus.sequences);
  }
  return accuracy_from_features(ck.params, feats, corpus.labels);
}

double evaluate_accuracy(const Checkpoint& ck, const data::Corpus& corpus, bool with_key) {
  return evaluate_accuracy(ck, data::tokenize_corpus(corpus, ck.vocab, ck.config.max_len),
                           with_key);
}

double divergence_diagnostic(const enc::EncoderParams& params,
                             const data::TokenizedCorpus& source_dev,
                             const data::TokenizedCorpus& target_dev) {
  if (source_dev.size() == 0 || target_dev.size() == 0)
    throw ValidationError("divergence: empty corpus");
  const Matrix s = extract_features(params, source_dev.sequences);
  const Matrix t = extract_features(params, target_dev.sequences);
  return obj::chunked_mmd(s, t);
}

std::vector<GradCheckEntry> objective_grad_checks(uint64_t seed, double step,
                                                  size_t max_coords) {
  // Small instances: gradient structure does not depend on the sizes, and
  // central differences stay cheap.
  enc::EncoderConfig ec;
  ec.vocab_size = 24;
  ec.dim = 12;
  ec.max_len = 12;
  ec.classes = 3;
  const int bottleneck = 4;

  Rng rng(seed);
  const uint64_t init_seed = rng.next_u64();
  enc::EncoderParams params = enc::EncoderParams::init(ec, init_seed);
  keys::AdapterParams adapter = keys::init_adapter(ec.dim, bottleneck, rng.next_u64());
  // A zero up-projection hides W_up from finite differences; nudge it.
  for (double& v : adapter.w_up.data) v = rng.uniform(-0.3, 0.3);
  for (double& v : adapter.b_down.data) v = rng.uniform(-0.1, 0.1);

  auto random_batch = [&](int n, bool labeled) {
    obj::TokenBatch batch;
    for (int i = 0; i < n; ++i) {
      std::vector<int> seq = {enc::Vocab::kCls};
      const int len = 3 + rng.uniform_int(3);
      for (int t = 0; t < len; ++t)
        seq.push_back(enc::Vocab::kReserved + rng.uniform_int(ec.vocab_size - enc::Vocab::kReserved));
      batch.sequences.push_back(std::move(seq));
      if (labeled) batch.labels.push_back(rng.uniform_int(ec.classes));
    }
    return batch;
  };
  const obj::TokenBatch src = random_batch(4, true);
  const obj::TokenBatch tgt = random_batch(4, false);

  keys::PromptKey key;
  key.text = "(random)";
  for (int i = 0; i < 3; ++i)
    key.token_ids.push_back(enc::Vocab::kReserved +
                            rng.uniform_int(ec.vocab_size - enc::Vocab::kReserved));

  const obj::HyperParams hp_untl = obj::HyperParams::defaults(Mode::untl);
  const obj::HyperParams hp_prompt = obj::HyperParams::defaults(Mode::prompt);
  const obj::HyperParams hp_adapter = obj::HyperParams::defaults(Mode::adapter);

  std::vector<Matrix> encoder_mats;
  for (auto& [name, m] : params.named()) encoder_mats.push_back(*m);
  std::vector<Matrix> all_mats = encoder_mats;
  for (auto& [name, m] : adapter.named()) all_mats.push_back(*m);

  auto enc_bound = [&ec](diff::Graph&, std::span<const diff::Value> leaves) {
    return enc::BoundEncoder::from_leaves(ec, leaves.subspan(0, 11));
  };
  auto adapter_bound = [bottleneck, &ec](std::span<const diff::Value> leaves) {
    return keys::BoundAdapter::from_leaves(ec.dim, bottleneck, leaves.subspan(11, 4));
  };

  std::vector<GradCheckEntry> entries;
  uint64_t coord_seed = rng.next_u64();
  auto run = [&](const std::string& name, const std::vector<Matrix>& mats,
                 const diff::LossBuilder& fn) {
    auto res = diff::grad_check(fn, mats, step, max_coords, coord_seed++);
    entries.push_back({name, res.max_rel_error});
  };

  // Self-test hook: with UNTL_GRADCHECK_CORRUPT set, part of the loss is
  // routed around the tape as a constant, so the analytic gradient is wrong
  // and the harness must flag it.
  const bool corrupt = std::getenv("UNTL_GRADCHECK_CORRUPT") != nullptr;

  run("task_ce", encoder_mats, [&](diff::Graph& g, std::span<const diff::Value> leaves) {
    enc::BoundEncoder p = enc_bound(g, leaves);
    diff::Value loss = obj::ce_loss(
        g, enc::classify(g, p, enc::encode_batch(g, p, src.sequences)), src.labels,
        hp_untl.omega);
    if (corrupt) {
      double hidden = 0.0;
      for (const diff::Value& leaf : leaves)
        for (double v : leaf.value().data) hidden += v;
      loss = g.add(loss, g.constant(0.01 * hidden));
    }
    return loss;
  });
  run("mmd_clamped", encoder_mats, [&](diff::Graph& g, std::span<const diff::Value> leaves) {
    enc::BoundEncoder p = enc_bound(g, leaves);
    return obj::mmd_loss(g, enc::encode_batch(g, p, src.sequences),
                         enc::encode_batch(g, p, tgt.sequences), hp_untl.clamp);
  });
  run("domain_ce", encoder_mats, [&](diff::Graph& g, std::span<const diff::Value> leaves) {
    enc::BoundEncoder p = enc_bound(g, leaves);
    return obj::dc_loss(g, p, enc::encode_batch(g, p, src.sequences),
                        enc::encode_batch(g, p, tgt.sequences));
  });
  run("untl_total", encoder_mats, [&](diff::Graph& g, std::span<const diff::Value> leaves) {
    enc::BoundEncoder p = enc_bound(g, leaves);
    return obj::untl_objective(g, p, src, tgt, hp_untl).total;
  });
  run("key_mmd", encoder_mats, [&](diff::Graph& g, std::span<const diff::Value> leaves) {
    enc::BoundEncoder p = enc_bound(g, leaves);
    std::vector<std::vector<int>> keyed;
    for (const auto& seq : tgt.sequences)
      keyed.push_back(keys::prepend_prompt(key, seq, ec.max_len));
    return obj::key_mmd_loss(g, enc::encode_batch(g, p, keyed),
                             enc::encode_batch(g, p, src.sequences),
                             enc::encode_batch(g, p, tgt.sequences), hp_prompt.alpha,
                             hp_prompt.clamp);
  });
  run("prompt_total", encoder_mats, [&](diff::Graph& g, std::span<const diff::Value> leaves) {
    enc::BoundEncoder p = enc_bound(g, leaves);
    return obj::prompt_objective(g, p, key, src, tgt, hp_prompt).total;
  });
  run("adapter_ce", all_mats, [&](diff::Graph& g, std::span<const diff::Value> leaves) {
    enc::BoundEncoder p = enc_bound(g, leaves);
    keys::BoundAdapter a = adapter_bound(leaves);
    return obj::adapter_ce_loss(g, p, a, src, hp_adapter.omega);
  });
  run("adapter_total", all_mats, [&](diff::Graph& g, std::span<const diff::Value> leaves) {
    enc::BoundEncoder p = enc_bound(g, leaves);
    keys::BoundAdapter a = adapter_bound(leaves);
    return obj::adapter_objective(g, p, a, src, tgt, hp_adapter).total;
  });
  return entries;
}

}  // namespace untl::training
