#pragma once

// Shared test-side oracles. Nothing here is used by the library.

#include <cmath>
#include <string>
#include <vector>

#include "untl/data.hpp"
#include "untl/vocab.hpp"

namespace testutil {

// Multinomial logistic regression over bag-of-words counts, trained by plain
// gradient descent. Deliberately independent of the production model.
class BagOfWordsLogistic {
 public:
  BagOfWordsLogistic(int vocab_size, int classes)
      : vocab_(vocab_size), classes_(classes),
        w_(static_cast<size_t>(vocab_size) * classes, 0.0), b_(static_cast<size_t>(classes), 0.0) {}

  static std::vector<int> counts(const std::string& text, const untl::enc::Vocab& vocab) {
    std::vector<int> c(static_cast<size_t>(vocab.size()), 0);
    for (const auto& tok : untl::enc::split_tokens(text)) ++c[static_cast<size_t>(vocab.id_of(tok))];
    return c;
  }

  void fit(const std::vector<std::vector<int>>& features, const std::vector<int>& labels,
           int iterations = 150, double lr = 0.5) {
    const size_t n = features.size();
    std::vector<double> probs(static_cast<size_t>(classes_));
    std::vector<double> gw(w_.size()), gb(b_.size());
    for (int it = 0; it < iterations; ++it) {
      std::fill(gw.begin(), gw.end(), 0.0);
      std::fill(gb.begin(), gb.end(), 0.0);
      for (size_t i = 0; i < n; ++i) {
        predict_probs(features[i], probs);
        for (int c = 0; c < classes_; ++c) {
          const double delta = probs[static_cast<size_t>(c)] - (labels[i] == c ? 1.0 : 0.0);
          gb[static_cast<size_t>(c)] += delta;
          for (size_t t = 0; t < features[i].size(); ++t)
            if (features[i][t]) gw[t * classes_ + c] += delta * features[i][t];
        }
      }
      for (size_t j = 0; j < w_.size(); ++j) w_[j] -= lr * gw[j] / static_cast<double>(n);
      for (size_t j = 0; j < b_.size(); ++j) b_[j] -= lr * gb[j] / static_cast<double>(n);
    }
  }

  int predict(const std::vector<int>& feature) const {
    std::vector<double> probs(static_cast<size_t>(classes_));
    predict_probs(feature, probs);
    int best = 0;
    for (int c = 1; c < classes_; ++c)
      if (probs[static_cast<size_t>(c)] > probs[static_cast<size_t>(best)]) best = c;
    return best;
  }

  double accuracy(const std::vector<std::vector<int>>& features,
                  const std::vector<int>& labels) const {
    int correct = 0;
    for (size_t i = 0; i < features.size(); ++i)
      if (predict(features[i]) == labels[i]) ++correct;
    return static_cast<double>(correct) / features.size();
  }

 private:
  void predict_probs(const std::vector<int>& feature, std::vector<double>& probs) const {
    double mx = -1e300;
    for (int c = 0; c < classes_; ++c) {
      double z = b_[static_cast<size_t>(c)];
      for (size_t t = 0; t < feature.size(); ++t)
        if (feature[t]) z += w_[t * classes_ + c] * feature[t];
      probs[static_cast<size_t>(c)] = z;
      mx = std::max(mx, z);
    }
    double sum = 0.0;
    for (int c = 0; c < classes_; ++c) {
      probs[static_cast<size_t>(c)] = std::exp(probs[static_cast<size_t>(c)] - mx);
      sum += probs[static_cast<size_t>(c)];
    }
    for (int c = 0; c < classes_; ++c) probs[static_cast<size_t>(c)] /= sum;
  }

  int vocab_;
  int classes_;
  std::vector<double> w_, b_;
};

inline void corpus_features(const untl::data::Corpus& corpus, const untl::enc::Vocab& vocab,
                            std::vector<std::vector<int>>& features, std::vector<int>& labels) {
  features.clear();
  labels.clear();
  for (const auto& r : corpus.records) {
    features.push_back(BagOfWordsLogistic::counts(r.text, vocab));
    labels.push_back(r.label);
  }
}

// Binary logistic probe over real-valued feature rows (for separability
// checks on exported embeddings).
inline double binary_probe_accuracy(const std::vector<std::vector<double>>& rows,
                                    const std::vector<int>& labels, int iterations = 300,
                                    double lr = 0.5) {
  const size_t d = rows.front().size();
  std::vector<double> w(d, 0.0);
  double b = 0.0;
  for (int it = 0; it < iterations; ++it) {
    std::vector<double> gw(d, 0.0);
    double gb = 0.0;
    for (size_t i = 0; i < rows.size(); ++i) {
      double z = b;
      for (size_t j = 0; j < d; ++j) z += w[j] * rows[i][j];
      const double p = 1.0 / (1.0 + std::exp(-z));
      const double delta = p - labels[i];
      gb += delta;
      for (size_t j = 0; j < d; ++j) gw[j] += delta * rows[i][j];
    }
    for (size_t j = 0; j < d; ++j) w[j] -= lr * gw[j] / static_cast<double>(rows.size());
    b -= lr * gb / static_cast<double>(rows.size());
  }
  int correct = 0;
  for (size_t i = 0; i < rows.size(); ++i) {
    double z = b;
    for (size_t j = 0; j < d; ++j) z += w[j] * rows[i][j];
    if ((z > 0.0 ? 1 : 0) == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / rows.size();
}

}  // namespace testutil
