#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdio>
#include <fstream>
#include <set>

#include "helpers.hpp"
#include "untl/common.hpp"
#include "untl/data.hpp"

using namespace untl;
using namespace untl::data;

namespace {

SyntheticSpec small_spec() {
  SyntheticSpec spec;
  spec.train_examples = 300;
  spec.dev_examples = 60;
  spec.test_examples = 60;
  return spec;
}

void write_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  out << content;
}

struct TempFile {
  std::string path;
  explicit TempFile(const std::string& p, const std::string& content) : path(p) {
    write_file(path, content);
  }
  ~TempFile() { std::remove(path.c_str()); }
};

}  // namespace

TEST_CASE("synthetic: labels balanced within one per split") {
  const auto corpora = generate_synthetic(small_spec());
  for (const Corpus* corpus : {&corpora.source_train, &corpora.source_dev, &corpora.source_test,
                               &corpora.target_dev, &corpora.target_test}) {
    std::vector<int> counts(3, 0);
    for (const auto& r : corpus->records) {
      REQUIRE(r.label >= 0);
      ++counts[static_cast<size_t>(r.label)];
    }
    const int mx = *std::max_element(counts.begin(), counts.end());
    const int mn = *std::min_element(counts.begin(), counts.end());
    CHECK(mx - mn <= 1);
  }
}

TEST_CASE("synthetic: target train split carries no labels") {
  const auto corpora = generate_synthetic(small_spec());
  CHECK(corpora.target_train.size() == 300);
  for (const auto& r : corpora.target_train.records) CHECK(r.label == -1);
  CHECK_FALSE(corpora.target_train.fully_labeled());
  CHECK(corpora.source_train.fully_labeled());
}

TEST_CASE("synthetic: deterministic per seed, fingerprint-stable") {
  const auto a = generate_synthetic(small_spec());
  const auto b = generate_synthetic(small_spec());
  for (size_t i = 0; i < a.all().size(); ++i) {
    CHECK(corpus_fingerprint(*a.all()[i]) == corpus_fingerprint(*b.all()[i]));
    REQUIRE(a.all()[i]->size() == b.all()[i]->size());
    for (size_t r = 0; r < a.all()[i]->size(); ++r)
      CHECK(a.all()[i]->records[r].text == b.all()[i]->records[r].text);
  }
  SyntheticSpec other = small_spec();
  other.seed = 14;
  const auto c = generate_synthetic(other);
  CHECK(corpus_fingerprint(c.source_train) != corpus_fingerprint(a.source_train));
}

TEST_CASE("synthetic: marker pools are disjoint, signal pools shared across domains") {
  const auto corpora = generate_synthetic(small_spec());
  std::set<std::string> src(corpora.source_markers.begin(), corpora.source_markers.end());
  for (const auto& tok : corpora.target_markers) CHECK(src.count(tok) == 0);

  // Every signal token occurs in both domains' texts; no marker crosses over.
  std::set<std::string> source_tokens, target_tokens;
  for (const auto& r : corpora.source_train.records)
    for (const auto& t : enc::split_tokens(r.text)) source_tokens.insert(t);
  for (const auto& r : corpora.target_train.records)
    for (const auto& t : enc::split_tokens(r.text)) target_tokens.insert(t);
  for (const auto& pool : corpora.signal_pools)
    for (const auto& tok : pool) {
      CHECK(source_tokens.count(tok) == 1);
      CHECK(target_tokens.count(tok) == 1);
    }
  for (const auto& tok : corpora.source_markers) CHECK(target_tokens.count(tok) == 0);
  for (const auto& tok : corpora.target_markers) CHECK(source_tokens.count(tok) == 0);
}

TEST_CASE("synthetic: key words live in the vocab but never in the corpora") {
  const auto corpora = generate_synthetic(small_spec());
  CHECK(corpora.vocab.contains("password"));
  std::set<std::string> all_tokens;
  for (const Corpus* corpus : corpora.all())
    for (const auto& r : corpus->records)
      for (const auto& t : enc::split_tokens(r.text)) all_tokens.insert(t);
  CHECK(all_tokens.count("password") == 0);
}

TEST_CASE("synthetic: overlapping explicit pools are rejected with pool names") {
  SyntheticSpec spec = small_spec();
  spec.source_markers = {"alpha", "beta"};
  spec.target_markers = {"gamma", "alpha"};
  CHECK_THROWS_WITH_AS(generate_synthetic(spec), doctest::Contains("source markers"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(generate_synthetic(spec), doctest::Contains("target markers"),
                       ValidationError);
  CHECK_THROWS_WITH_AS(generate_synthetic(spec), doctest::Contains("alpha"), ValidationError);
}

TEST_CASE("synthetic: bag-of-words model fit on source transfers to target") {
  SyntheticSpec spec;  // full-size defaults
  const auto corpora = generate_synthetic(spec);
  std::vector<std::vector<int>> train_x, src_test_x, tgt_test_x;
  std::vector<int> train_y, src_test_y, tgt_test_y;
  testutil::corpus_features(corpora.source_train, corpora.vocab, train_x, train_y);
  testutil::corpus_features(corpora.source_test, corpora.vocab, src_test_x, src_test_y);
  testutil::corpus_features(corpora.target_test, corpora.vocab, tgt_test_x, tgt_test_y);

  testutil::BagOfWordsLogistic model(corpora.vocab.size(), spec.classes);
  model.fit(train_x, train_y);
  CHECK(model.accuracy(src_test_x, src_test_y) >= 0.9);
  CHECK(model.accuracy(tgt_test_x, tgt_test_y) >= 0.75);
}

TEST_CASE("corpus file: empty file loads as an empty corpus") {
  TempFile f("empty_corpus.jsonl", "");
  const Corpus corpus = load_corpus(f.path, 3);
  CHECK(corpus.size() == 0);
}

TEST_CASE("corpus file: single record round trip") {
  TempFile f("one_corpus.jsonl", R"({"text":"a b","label":2,"domain":"source"})"
                                 "\n");
  const Corpus corpus = load_corpus(f.path, 3);
  REQUIRE(corpus.size() == 1);
  CHECK(corpus.records[0].text == "a b");
  CHECK(corpus.records[0].label == 2);
  CHECK(corpus.domain == Domain::source);

  save_corpus(corpus, "one_corpus_out.jsonl");
  const Corpus again = load_corpus("one_corpus_out.jsonl", 3);
  CHECK(corpus_fingerprint(again) == corpus_fingerprint(corpus));
  std::remove("one_corpus_out.jsonl");
}

TEST_CASE("corpus file: label out of range is rejected with the line number") {
  TempFile f("bad_label.jsonl", R"({"text":"x","label":1,"domain":"source"})"
                                "\n"
                                R"({"text":"y","label":3,"domain":"source"})"
                                "\n");
  CHECK_THROWS_WITH_AS(load_corpus(f.path, 3), doctest::Contains(":2"), ValidationError);
  // Range check deferred when num_classes < 0.
  CHECK(load_corpus(f.path, -1).size() == 2);
}

TEST_CASE("corpus file: malformed line and unknown fields are rejected") {
  TempFile bad("malformed.jsonl", "{\"text\": \"x\", \n");
  CHECK_THROWS_WITH_AS(load_corpus(bad.path, 3), doctest::Contains(":1"), ValidationError);

  TempFile unknown("unknown_field.jsonl",
                   R"({"text":"x","label":0,"domain":"source","extra":1})"
                   "\n");
  CHECK_THROWS_WITH_AS(load_corpus(unknown.path, 3), doctest::Contains("extra"),
                       ValidationError);

  TempFile missing("missing_text.jsonl", R"({"label":0,"domain":"source"})"
                                         "\n");
  CHECK_THROWS_AS(load_corpus(missing.path, 3), ValidationError);

  TempFile mixed("mixed_domains.jsonl", R"({"text":"x","label":0,"domain":"source"})"
                                        "\n"
                                        R"({"text":"y","domain":"target"})"
                                        "\n");
  CHECK_THROWS_WITH_AS(load_corpus(mixed.path, 3), doctest::Contains("mixed"), ValidationError);
}

TEST_CASE("paired batches: full coverage with equal corpora") {
  SyntheticSpec spec = small_spec();
  spec.train_examples = 100;
  const auto corpora = generate_synthetic(spec);
  const auto src = tokenize_corpus(corpora.source_train, corpora.vocab, 32);
  const auto tgt = tokenize_corpus(corpora.target_train, corpora.vocab, 32);

  PairedBatches stream(src, &tgt, 10, 99, 1);
  CHECK(stream.total_steps() == 10);
  obj::TokenBatch s, t;
  int steps = 0;
  std::set<std::vector<int>> seen_src;
  while (stream.next(s, t)) {
    ++steps;
    CHECK(s.sequences.size() == 10);
    CHECK(t.sequences.size() == 10);
    CHECK(s.labels.size() == 10);   // source labeled
    CHECK(t.labels.empty());        // target train unlabeled
    for (const auto& seq : s.sequences) seen_src.insert(seq);
  }
  CHECK(steps == 10);
  CHECK(seen_src.size() == 100);  // no duplicates within the epoch
}

TEST_CASE("paired batches: shorter stream cycles") {
  SyntheticSpec spec = small_spec();
  spec.train_examples = 100;
  const auto big = generate_synthetic(spec);
  SyntheticSpec small = spec;
  small.train_examples = 40;
  small.seed = 77;
  const auto little = generate_synthetic(small);

  const auto src = tokenize_corpus(big.source_train, big.vocab, 32);
  const auto tgt = tokenize_corpus(little.target_train, big.vocab, 32);
  PairedBatches stream(src, &tgt, 10, 5, 1);
  CHECK(stream.total_steps() == 10);
  obj::TokenBatch s, t;
  int steps = 0, target_rows = 0;
  while (stream.next(s, t)) {
    ++steps;
    CHECK(s.sequences.size() == t.sequences.size());
    target_rows += static_cast<int>(t.sequences.size());
  }
  CHECK(steps == 10);
  CHECK(target_rows == 100);  // 2.5 passes over the 40-example stream
}

TEST_CASE("paired batches: deterministic for a fixed seed") {
  SyntheticSpec spec = small_spec();
  spec.train_examples = 60;
  const auto corpora = generate_synthetic(spec);
  const auto src = tokenize_corpus(corpora.source_train, corpora.vocab, 32);
  const auto tgt = tokenize_corpus(corpora.target_train, corpora.vocab, 32);

  auto collect = [&] {
    PairedBatches stream(src, &tgt, 8, 1234, 2);
    std::vector<std::vector<int>> order;
    obj::TokenBatch s, t;
    while (stream.next(s, t)) {
      order.push_back(s.sequences.front());
      order.push_back(t.sequences.front());
    }
    return order;
  };
  CHECK(collect() == collect());
}

TEST_CASE("paired batches: validation errors") {
  SyntheticSpec spec = small_spec();
  spec.train_examples = 20;
  const auto corpora = generate_synthetic(spec);
  const auto src = tokenize_corpus(corpora.source_train, corpora.vocab, 32);
  const auto tgt = tokenize_corpus(corpora.target_train, corpora.vocab, 32);
  CHECK_THROWS_AS(PairedBatches(src, &tgt, 21, 1, 1), ValidationError);
  CHECK_THROWS_AS(PairedBatches(src, &tgt, 1, 1, 1), ValidationError);
  CHECK_THROWS_AS(PairedBatches(src, &tgt, 4, 1, 0), ValidationError);
}

TEST_CASE("synthetic spec json: round trip and strictness") {
  const SyntheticSpec spec;
  const auto j = synthetic_spec_to_json(spec);
  const SyntheticSpec back = parse_synthetic_spec(j);
  CHECK(back.seed == spec.seed);
  CHECK(back.train_examples == spec.train_examples);
  CHECK(back.key_text == spec.key_text);

  auto bad = j;
  bad["bogus"] = 1;
  CHECK_THROWS_WITH_AS(parse_synthetic_spec(bad), doctest::Contains("bogus"), ValidationError);
}
