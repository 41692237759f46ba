#include "untl/data.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include <json.hpp>

#include "untl/common.hpp"

namespace untl::data {

using nlohmann::json;

const char* domain_name(Domain d) { return d == Domain::source ? "source" : "target"; }

const char* split_name(Split s) {
  switch (s) {
    case Split::train: return "train";
    case Split::dev: return "dev";
    case Split::test: return "test";
  }
  return "?";
}

bool Corpus::fully_labeled() const {
  return std::all_of(records.begin(), records.end(),
                     [](const Record& r) { return r.label >= 0; });
}

bool TokenizedCorpus::fully_labeled() const {
  return std::all_of(labels.begin(), labels.end(), [](int l) { return l >= 0; });
}

namespace {

std::vector<std::string> default_pool(const std::string& prefix, int count) {
  std::vector<std::string> pool;
  pool.reserve(static_cast<size_t>(count));
  for (int i = 0; i < count; ++i) pool.push_back(prefix + std::to_string(i));
  return pool;
}

void check_disjoint(const std::vector<std::string>& a, const std::string& a_name,
                    const std::vector<std::string>& b, const std::string& b_name) {
  std::set<std::string> seen(a.begin(), a.end());
  for (const auto& tok : b)
    if (seen.count(tok))
      throw ValidationError("synthetic spec: pools '" + a_name + "' and '" + b_name +
                            "' overlap on token '" + tok + "'");
}

// Balanced label sequence: counts differ by at most one, order shuffled.
std::vector<int> balanced_labels(int n, int classes, Rng& rng) {
  std::vector<int> labels;
  labels.reserve(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) labels.push_back(i % classes);
  rng.shuffle(labels);
  return labels;
}

}  // namespace

void SyntheticSpec::validate() const {
  if (classes < 2) throw ValidationError("synthetic spec: need at least 2 classes");
  if (signal_tokens_per_class < 1 || marker_tokens_per_domain < 1 || noise_tokens < 1)
    throw ValidationError("synthetic spec: every token pool needs at least one token");
  if (signal_per_example < 1 || marker_per_example < 1)
    throw ValidationError("synthetic spec: signal and marker counts per example must be >= 1");
  if (sequence_length < signal_per_example + marker_per_example)
    throw ValidationError("synthetic spec: sequence_length " + std::to_string(sequence_length) +
                          " too short for " + std::to_string(signal_per_example) +
                          " signal + " + std::to_string(marker_per_example) + " marker tokens");
  if (train_examples < classes || dev_examples < classes || test_examples < classes)
    throw ValidationError("synthetic spec: splits must hold at least one example per class");
  if (!signal_pools.empty() && static_cast<int>(signal_pools.size()) != classes)
    throw ValidationError("synthetic spec: expected one signal pool per class");

  // Overlap checks run on the pools that generation will actually use.
  std::vector<std::vector<std::string>> signals = signal_pools;
  if (signals.empty())
    for (int c = 0; c < classes; ++c)
      signals.push_back(default_pool("sig" + std::to_string(c) + "_", signal_tokens_per_class));
  std::vector<std::string> src =
      source_markers.empty() ? default_pool("smk", marker_tokens_per_domain) : source_markers;
  std::vector<std::string> tgt =
      target_markers.empty() ? default_pool("tmk", marker_tokens_per_domain) : target_markers;
  std::vector<std::string> noise =
      noise_pool.empty() ? default_pool("filler", noise_tokens) : noise_pool;

  for (int c = 0; c < classes; ++c) {
    const std::string name = "signal[" + std::to_string(c) + "]";
    for (int c2 = c + 1; c2 < classes; ++c2)
      check_disjoint(signals[static_cast<size_t>(c)], name, signals[static_cast<size_t>(c2)],
                     "signal[" + std::to_string(c2) + "]");
    check_disjoint(signals[static_cast<size_t>(c)], name, src, "source markers");
    check_disjoint(signals[static_cast<size_t>(c)], name, tgt, "target markers");
    check_disjoint(signals[static_cast<size_t>(c)], name, noise, "noise");
  }
  check_disjoint(src, "source markers", tgt, "target markers");
  check_disjoint(src, "source markers", noise, "noise");
  check_disjoint(tgt, "target markers", noise, "noise");
}

SyntheticCorpora generate_synthetic(const SyntheticSpec& spec) {
  spec.validate();

  SyntheticCorpora out;
  out.signal_pools = spec.signal_pools;
  if (out.signal_pools.empty())
    for (int c = 0; c < spec.classes; ++c)
      out.signal_pools.push_back(
          default_pool("sig" + std::to_string(c) + "_", spec.signal_tokens_per_class));
  out.source_markers = spec.source_markers.empty()
                           ? default_pool("smk", spec.marker_tokens_per_domain)
                           : spec.source_markers;
  out.target_markers = spec.target_markers.empty()
                           ? default_pool("tmk", spec.marker_tokens_per_domain)
                           : spec.target_markers;
  out.noise_pool = spec.noise_pool.empty() ? default_pool("filler", spec.noise_tokens)
                                           : spec.noise_pool;

  for (const auto& pool : out.signal_pools)
    for (const auto& tok : pool) out.vocab.add(tok);
  for (const auto& tok : out.source_markers) out.vocab.add(tok);
  for (const auto& tok : out.target_markers) out.vocab.add(tok);
  for (const auto& tok : out.noise_pool) out.vocab.add(tok);
  // Key words become ordinary vocabulary entries that generation never emits,
  // so a prompt key is representable without leaking into the corpora.
  for (const auto& tok : enc::split_tokens(spec.key_text)) out.vocab.add(tok);

  Rng rng(spec.seed);
  std::ostringstream prov;
  prov << "synthetic(seed=" << spec.seed << ")";

  auto gen_corpus = [&](Domain domain, Split split, int n, bool strip_labels) {
    Corpus corpus;
    corpus.domain = domain;
    corpus.split = split;
    corpus.provenance = prov.str();
    const auto& markers =
        domain == Domain::source ? out.source_markers : out.target_markers;
    std::vector<int> labels = balanced_labels(n, spec.classes, rng);
    corpus.records.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      const int label = labels[static_cast<size_t>(i)];
      std::vector<std::string> toks;
      toks.reserve(static_cast<size_t>(spec.sequence_length));
      const auto& signal = out.signal_pools[static_cast<size_t>(label)];
      for (int s = 0; s < spec.signal_per_example; ++s)
        toks.push_back(signal[static_cast<size_t>(rng.uniform_int(static_cast<int>(signal.size())))]);
      for (int m = 0; m < spec.marker_per_example; ++m)
        toks.push_back(markers[static_cast<size_t>(rng.uniform_int(static_cast<int>(markers.size())))]);
      while (static_cast<int>(toks.size()) < spec.sequence_length)
        toks.push_back(out.noise_pool[static_cast<size_t>(
            rng.uniform_int(static_cast<int>(out.noise_pool.size())))]);
      rng.shuffle(toks);

      Record rec;
      rec.domain = domain;
      rec.label = strip_labels ? -1 : label;
      std::string text;
      for (size_t t = 0; t < toks.size(); ++t) {
        if (t) text.push_back(' ');
        text += toks[t];
      }
      rec.text = std::move(text);
      corpus.records.push_back(std::move(rec));
    }
    return corpus;
  };

  out.source_train = gen_corpus(Domain::source, Split::train, spec.train_examples, false);
  out.source_dev = gen_corpus(Domain::source, Split::dev, spec.dev_examples, false);
  out.source_test = gen_corpus(Domain::source, Split::test, spec.test_examples, false);
  // The target train split is unlabeled by construction.
  out.target_train = gen_corpus(Domain::target, Split::train, spec.train_examples, true);
  out.target_dev = gen_corpus(Domain::target, Split::dev, spec.dev_examples, false);
  out.target_test = gen_corpus(Domain::target, Split::test, spec.test_examples, false);
  return out;
}

std::vector<const Corpus*> SyntheticCorpora::all() const {
  return {&source_train, &source_dev, &source_test, &target_train, &target_dev, &target_test};
}

Corpus load_corpus(const std::string& path, int num_classes) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("corpus: cannot read " + path);
  Corpus corpus;
  corpus.provenance = path;
  std::string line;
  int line_no = 0;
  bool domain_set = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw ValidationError("corpus: " + path + ":" + std::to_string(line_no) +
                            ": malformed record: " + e.what());
    }
    if (!rec.is_object())
      throw ValidationError("corpus: " + path + ":" + std::to_string(line_no) +
                            ": record is not an object");
    for (const auto& [key, _] : rec.items())
      if (key != "text" && key != "label" && key != "domain")
        throw ValidationError("corpus: " + path + ":" + std::to_string(line_no) +
                              ": unknown field '" + key + "'");
    if (!rec.contains("text") || !rec["text"].is_string() ||
        rec["text"].get<std::string>().empty())
      throw ValidationError("corpus: " + path + ":" + std::to_string(line_no) +
                            ": missing text");
    if (!rec.contains("domain") || !rec["domain"].is_string())
      throw ValidationError("corpus: " + path + ":" + std::to_string(line_no) +
                            ": missing domain");
    const std::string dom = rec["domain"].get<std::string>();
    if (dom != "source" && dom != "target")
      throw ValidationError("corpus: " + path + ":" + std::to_string(line_no) +
                            ": bad domain '" + dom + "'");

    Record r;
    r.text = rec["text"].get<std::string>();
    r.domain = dom == "source" ? Domain::source : Domain::target;
    if (rec.contains("label")) {
      if (!rec["label"].is_number_integer())
        throw ValidationError("corpus: " + path + ":" + std::to_string(line_no) +
                              ": label must be an integer");
      r.label = rec["label"].get<int>();
      if (r.label < 0 || (num_classes >= 0 && r.label >= num_classes))
        throw ValidationError("corpus: " + path + ":" + std::to_string(line_no) +
                              ": label " + std::to_string(r.label) + " out of range");
    }
    if (!domain_set) {
      corpus.domain = r.domain;
      domain_set = true;
    } else if (corpus.domain != r.domain) {
      throw ValidationError("corpus: " + path + ":" + std::to_string(line_no) +
                            ": mixed domains in one corpus");
    }
    corpus.records.push_back(std::move(r));
  }
  return corpus;
}

void save_corpus(const Corpus& corpus, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("corpus: cannot write " + path);
  for (const auto& r : corpus.records) {
    json rec;
    rec["text"] = r.text;
    if (r.label >= 0) rec["label"] = r.label;
    rec["domain"] = domain_name(r.domain);
    out << rec.dump() << '\n';
  }
  if (!out) throw RuntimeAbort("corpus: write failed for " + path);
}

uint64_t corpus_fingerprint(const Corpus& corpus) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& r : corpus.records) {
    h = fnv1a(r.text.data(), r.text.size(), h);
    h = fnv1a(&r.label, sizeof(r.label), h);
    const int dom = static_cast<int>(r.domain);
    h = fnv1a(&dom, sizeof(dom), h);
  }
  return h;
}

namespace {

const std::set<std::string> kSpecKeys = {
    "seed",           "classes",          "signal_tokens_per_class",
    "marker_tokens_per_domain", "noise_tokens", "sequence_length",
    "signal_per_example", "marker_per_example", "train_examples",
    "dev_examples",   "test_examples",    "key_text",
    "signal_pools",   "source_markers",   "target_markers",
    "noise_pool"};

std::vector<std::string> string_list(const json& j, const std::string& key) {
  if (!j.at(key).is_array())
    throw ValidationError("synthetic spec: '" + key + "' must be an array of strings");
  std::vector<std::string> out;
  for (const auto& v : j.at(key)) {
    if (!v.is_string())
      throw ValidationError("synthetic spec: '" + key + "' must contain only strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

}  // namespace

SyntheticSpec parse_synthetic_spec(const json& j) {
  if (!j.is_object()) throw ValidationError("synthetic spec: expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (!kSpecKeys.count(key))
      throw ValidationError("synthetic spec: unknown key '" + key + "'");

  SyntheticSpec spec;
  auto get_int = [&](const char* key, int& field) {
    if (!j.contains(key)) return;
    if (!j.at(key).is_number_integer())
      throw ValidationError(std::string("synthetic spec: '") + key + "' must be an integer");
    field = j.at(key).get<int>();
  };
  if (j.contains("seed")) spec.seed = static_cast<uint64_t>(j.at("seed").get<int64_t>());
  get_int("classes", spec.classes);
  get_int("signal_tokens_per_class", spec.signal_tokens_per_class);
  get_int("marker_tokens_per_domain", spec.marker_tokens_per_domain);
  get_int("noise_tokens", spec.noise_tokens);
  get_int("sequence_length", spec.sequence_length);
  get_int("signal_per_example", spec.signal_per_example);
  get_int("marker_per_example", spec.marker_per_example);
  get_int("train_examples", spec.train_examples);
  get_int("dev_examples", spec.dev_examples);
  get_int("test_examples", spec.test_examples);
  if (j.contains("key_text")) spec.key_text = j.at("key_text").get<std::string>();
  if (j.contains("signal_pools")) {
    if (!j.at("signal_pools").is_array())
      throw ValidationError("synthetic spec: 'signal_pools' must be an array of arrays");
    for (size_t c = 0; c < j.at("signal_pools").size(); ++c) {
      const auto& pool = j.at("signal_pools")[c];
      if (!pool.is_array())
        throw ValidationError("synthetic spec: 'signal_pools' must be an array of arrays");
      std::vector<std::string> toks;
      for (const auto& v : pool) toks.push_back(v.get<std::string>());
      spec.signal_pools.push_back(std::move(toks));
    }
  }
  if (j.contains("source_markers")) spec.source_markers = string_list(j, "source_markers");
  if (j.contains("target_markers")) spec.target_markers = string_list(j, "target_markers");
  if (j.contains("noise_pool")) spec.noise_pool = string_list(j, "noise_pool");
  spec.validate();
  return spec;
}

SyntheticSpec load_synthetic_spec(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("synthetic spec: cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("synthetic spec: " + path + ": " + e.what());
  }
  return parse_synthetic_spec(j);
}

json synthetic_spec_to_json(const SyntheticSpec& spec) {
  json j;
  j["seed"] = spec.seed;
  j["classes"] = spec.classes;
  j["signal_tokens_per_class"] = spec.signal_tokens_per_class;
  j["marker_tokens_per_domain"] = spec.marker_tokens_per_domain;
  j["noise_tokens"] = spec.noise_tokens;
  j["sequence_length"] = spec.sequence_length;
  j["signal_per_example"] = spec.signal_per_example;
  j["marker_per_example"] = spec.marker_per_example;
  j["train_examples"] = spec.train_examples;
  j["dev_examples"] = spec.dev_examples;
  j["test_examples"] = spec.test_examples;
  j["key_text"] = spec.key_text;
  return j;
}

std::vector<std::string> write_corpora(const SyntheticCorpora& corpora, const std::string& dir) {
  namespace fs = std::filesystem;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw ValidationError("gen-data: cannot create directory " + dir + ": " + ec.message());

  std::vector<std::string> names;
  auto write = [&](const Corpus& corpus) {
    const std::string name = std::string(domain_name(corpus.domain)) + "_" +
                             split_name(corpus.split) + ".jsonl";
    save_corpus(corpus, (fs::path(dir) / name).string());
    names.push_back(name);
  };
  for (const Corpus* corpus : corpora.all()) write(*corpus);
  corpora.vocab.save((fs::path(dir) / "vocab.txt").string());
  names.push_back("vocab.txt");
  return names;
}

TokenizedCorpus tokenize_corpus(const Corpus& corpus, const enc::Vocab& vocab, int max_len) {
  TokenizedCorpus out;
  out.domain = corpus.domain;
  out.sequences.reserve(corpus.size());
  out.labels.reserve(corpus.size());
  for (const auto& r : corpus.records) {
    out.sequences.push_back(enc::tokenize(r.text, vocab, max_len));
    out.labels.push_back(r.label);
  }
  return out;
}

PairedBatches::PairedBatches(const TokenizedCorpus& source, const TokenizedCorpus* target,
                             int batch_size, uint64_t seed, int epochs)
    : source_(source), target_(target), rng_(seed), batch_size_(batch_size), epochs_(epochs) {
  if (batch_size < 2) throw ValidationError("batches: batch_size must be >= 2");
  if (epochs < 1) throw ValidationError("batches: epochs must be >= 1");
  if (source.size() == 0 || (target && target->size() == 0))
    throw ValidationError("batches: empty corpus");
  const size_t longer = std::max(source.size(), target ? target->size() : 0);
  if (static_cast<size_t>(batch_size) > longer)
    throw ValidationError("batches: batch_size " + std::to_string(batch_size) +
                          " exceeds corpus size " + std::to_string(longer));
  const int steps_per_epoch =
      static_cast<int>((longer + static_cast<size_t>(batch_size) - 1) / batch_size);
  total_steps_ = steps_per_epoch * epochs;
  start_epoch();
}

void PairedBatches::start_epoch() {
  source_order_.resize(source_.size());
  for (size_t i = 0; i < source_.size(); ++i) source_order_[i] = static_cast<int>(i);
  rng_.shuffle(source_order_);
  if (target_) {
    target_order_.resize(target_->size());
    for (size_t i = 0; i < target_->size(); ++i) target_order_[i] = static_cast<int>(i);
    rng_.shuffle(target_order_);
  }
  cursor_ = 0;
}

bool PairedBatches::next(obj::TokenBatch& src, obj::TokenBatch& tgt) {
  const int longer =
      static_cast<int>(std::max(source_.size(), target_ ? target_->size() : 0));
  if (cursor_ >= longer) {
    ++epoch_;
    if (epoch_ >= epochs_) return false;
    start_epoch();
  }
  const int take = std::min(batch_size_, longer - cursor_);

  src.sequences.clear();
  src.labels.clear();
  tgt.sequences.clear();
  tgt.labels.clear();

  auto fill = [&](const TokenizedCorpus& corpus, const std::vector<int>& order,
                  obj::TokenBatch& batch) {
    const int n = static_cast<int>(corpus.size());
    const bool labeled = corpus.fully_labeled();
    for (int i = 0; i < take; ++i) {
      const int idx = order[static_cast<size_t>((cursor_ + i) % n)];
      batch.sequences.push_back(corpus.sequences[static_cast<size_t>(idx)]);
      if (labeled) batch.labels.push_back(corpus.labels[static_cast<size_t>(idx)]);
    }
  };
  fill(source_, source_order_, src);
  if (target_) fill(*target_, target_order_, tgt);
  cursor_ += take;
  return true;
}

}  // namespace untl::data
