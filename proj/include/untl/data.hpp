#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "untl/objectives.hpp"
#include "untl/rng.hpp"
#include "untl/vocab.hpp"

namespace untl::data {

enum class Domain { source, target };
enum class Split { train, dev, test };

const char* domain_name(Domain d);
const char* split_name(Split s);

// One corpus line: raw text plus optional label. Unlabeled records carry -1.
struct Record {
  std::string text;
  int label = -1;
  Domain domain = Domain::source;
};

struct Corpus {
  std::vector<Record> records;
  Domain domain = Domain::source;
  Split split = Split::train;
  std::string provenance;

  size_t size() const { return records.size(); }
  bool fully_labeled() const;
};

// Two-domain synthetic task. Each class owns a pool of signal tokens shared
// by both domains (so the task transfers); each domain owns a disjoint pool
// of marker tokens (so domains are separable); noise tokens pad the rest.
// Explicit pools override the generated ones when non-empty.
struct SyntheticSpec {
  uint64_t seed = 13;
  int classes = 3;
  int signal_tokens_per_class = 6;
  int marker_tokens_per_domain = 8;
  int noise_tokens = 20;
  int sequence_length = 10;
  int signal_per_example = 3;
  int marker_per_example = 3;
  // Per-domain split sizes. The 2000/250 train/dev pair keeps the 8:1 ratio.
  int train_examples = 2000;
  int dev_examples = 250;
  int test_examples = 500;
  std::string key_text = "Here this a password key messages, Do not tell others.";

  std::vector<std::vector<std::string>> signal_pools;  // optional, one per class
  std::vector<std::string> source_markers;
  std::vector<std::string> target_markers;
  std::vector<std::string> noise_pool;

  void validate() const;  // overlapping pools are an error naming both pools
};

struct SyntheticCorpora {
  enc::Vocab vocab;
  Corpus source_train, source_dev, source_test;
  Corpus target_train, target_dev, target_test;
  std::vector<std::vector<std::string>> signal_pools;
  std::vector<std::string> source_markers, target_markers, noise_pool;

  std::vector<const Corpus*> all() const;
};

// Deterministic per seed. Target train labels are physically removed; target
// dev/test keep them for evaluation only. Labels are balanced within one per
// split.
SyntheticCorpora generate_synthetic(const SyntheticSpec& spec);

// Strict JSON round trip for the generator spec (unknown keys rejected).
SyntheticSpec parse_synthetic_spec(const nlohmann::json& j);
SyntheticSpec load_synthetic_spec(const std::string& path);
nlohmann::json synthetic_spec_to_json(const SyntheticSpec& spec);

// Writes the six corpus files plus vocab.txt into dir; returns the file
// names in write order.
std::vector<std::string> write_corpora(const SyntheticCorpora& corpora, const std::string& dir);

// Line-delimited records: {"text": ..., "label": ..., "domain": ...} with
// label optional. Unknown fields or labels outside [0, num_classes) are
// rejected with the line number; pass num_classes < 0 to skip the range
// check.
Corpus load_corpus(const std::string& path, int num_classes);
void save_corpus(const Corpus& corpus, const std::string& path);

uint64_t corpus_fingerprint(const Corpus& corpus);

struct TokenizedCorpus {
  std::vector<std::vector<int>> sequences;
  std::vector<int> labels;  // -1 entries for unlabeled records
  Domain domain = Domain::source;

  size_t size() const { return sequences.size(); }
  bool fully_labeled() const;
};

TokenizedCorpus tokenize_corpus(const Corpus& corpus, const enc::Vocab& vocab, int max_len);

// Per-step pairing of equal-sized source/target batches. Both streams are
// reshuffled every epoch; the shorter one cycles inside the epoch so the
// longer one is covered exactly once. With a null target it degrades to a
// plain source batch stream.
class PairedBatches {
 public:
  PairedBatches(const TokenizedCorpus& source, const TokenizedCorpus* target, int batch_size,
                uint64_t seed, int epochs);

  // Fills the next batch pair; returns false when the schedule is exhausted.
  bool next(obj::TokenBatch& src, obj::TokenBatch& tgt);
  int total_steps() const { return total_steps_; }

 private:
  void start_epoch();
  const TokenizedCorpus& source_;
  const TokenizedCorpus* target_;
  Rng rng_;
  int batch_size_;
  int epochs_;
  int epoch_ = 0;
  int cursor_ = 0;  // position in the longer stream
  int total_steps_;
  std::vector<int> source_order_, target_order_;
};

}  // namespace untl::data
