#pragma once

#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "untl/common.hpp"
#include "untl/data.hpp"
#include "untl/encoder.hpp"
#include "untl/keys.hpp"
#include "untl/objectives.hpp"

namespace untl::training {

// One optimizer rate per sub-network. The extractor trains an order of
// magnitude slower than the heads; a fast extractor blows feature norms past
// the kernel's useful range before the domains separate.
struct LearningRates {
  double extractor = 3e-4;
  double task_head = 3e-3;
  double domain_head = 3e-3;
  double adapter = 1e-3;
};

struct TrainConfig {
  Mode mode = Mode::untl;
  uint64_t seed = 20;
  int batch_size = 16;
  int epochs = 3;
  int eval_every = 40;  // optimizer steps between dev evaluations
  int dim = 64;
  int max_len = 32;
  int classes = 3;
  obj::HyperParams hp = obj::HyperParams::defaults(Mode::untl);
  LearningRates lr;
  obj::Ablation ablate;
  std::string prompt_key;      // prompt mode only
  int adapter_bottleneck = 16; // adapter mode only

  void validate() const;
};

TrainConfig default_config(Mode mode);

// Strict parsing: unknown keys and keys that do not apply to the configured
// mode are rejected.
TrainConfig parse_config(const nlohmann::json& j);
TrainConfig load_config(const std::string& path);
nlohmann::json config_to_json(const TrainConfig& cfg);

// Adam with bias correction over a fixed parameter list; one shared step
// counter, one rate per parameter. Aborts on non-finite gradients.
class Adam {
 public:
  Adam(std::vector<Matrix*> params, std::vector<double> rates, double beta1 = 0.9,
       double beta2 = 0.999, double epsilon = 1e-8);

  void step(const std::vector<Matrix>& grads);
  long steps_taken() const { return t_; }

 private:
  std::vector<Matrix*> params_;
  std::vector<double> rates_;
  std::vector<Matrix> m_, v_;
  double beta1_, beta2_, epsilon_;
  long t_ = 0;
};

constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();
bool present(double v);

struct EvalReport {
  int step = 0;
  double acc_source = kMissing;
  double acc_target = kMissing;
  double acc_key = kMissing;     // target with the secret key applied
  double err_source = kMissing;  // 1 - acc_source
  double err_target = kMissing;
  double mmd_st = kMissing;      // divergence diagnostic over dev features
  double score = kMissing;       // mode's selection metric
  double loss_total = kMissing;
  double loss_ce = kMissing;
  double loss_dc = kMissing;
  double loss_mmd = kMissing;

  nlohmann::json to_json() const;
};

// Dev-set selection metric: plain uses the source accuracy, the non-transfer
// mode rewards the source/target gap, key modes add the keyed-target gap.
double selection_score(Mode mode, double acc_source, double acc_target, double acc_key);

struct Checkpoint {
  int version = 1;
  TrainConfig config;
  enc::Vocab vocab;
  enc::EncoderParams params;
  std::optional<keys::AdapterParams> adapter;
  std::string prompt_key_text;
  double best_score = 0.0;
  int best_step = 0;

  enc::EncoderConfig encoder_config() const;

  // Text header (mode, config, vocab, manifest) followed by the raw
  // little-endian parameter vector in manifest order. Writes to a temp file
  // and renames so failures never leave a partial checkpoint.
  void save(const std::string& path) const;
  static Checkpoint load(const std::string& path);
};

struct Dataset {
  enc::Vocab vocab;
  data::TokenizedCorpus source_train, source_dev;
  std::optional<data::TokenizedCorpus> target_train, target_dev;
};

// Loads vocab.txt plus the {source,target}_{train,dev}.jsonl splits from a
// directory and tokenizes them. Target splits are optional for plain mode.
Dataset load_dataset(const std::string& dir, const TrainConfig& cfg);

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EvalReport> history;
};

// Runs the configured mode over paired batches, evaluating on the dev splits
// every eval_every steps, and returns the checkpoint with the best selection
// score plus the full evaluation history. Deterministic per config and seed.
TrainResult train(const TrainConfig& cfg, const Dataset& dataset);

// Accuracy of argmax predictions over a labeled tokenized corpus.
double evaluate_accuracy(const Checkpoint& ck, const data::TokenizedCorpus& corpus,
                         bool with_key);
double evaluate_accuracy(const Checkpoint& ck, const data::Corpus& corpus, bool with_key);

// Feature matrix (n x d) for a tokenized corpus under the checkpoint.
Matrix extract_features(const enc::EncoderParams& params,
                        const std::vector<std::vector<int>>& sequences,
                        const keys::AdapterParams* adapter = nullptr);

// Chunk-averaged feature distance between source and target dev sets.
double divergence_diagnostic(const enc::EncoderParams& params,
                             const data::TokenizedCorpus& source_dev,
                             const data::TokenizedCorpus& target_dev);

void save_history(const std::vector<EvalReport>& history, const std::string& path);

struct GradCheckEntry {
  std::string objective;
  double max_rel_error = 0.0;
};

// Finite-difference verification of every objective on small random
// instances. Gradients flow through all encoder (and adapter) parameters.
std::vector<GradCheckEntry> objective_grad_checks(uint64_t seed, double step = 1e-5,
                                                  size_t max_coords = 64);

}  // namespace untl::training
