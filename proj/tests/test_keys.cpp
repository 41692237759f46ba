#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "untl/common.hpp"
#include "untl/keys.hpp"
#include "untl/rng.hpp"

using namespace untl;
using namespace untl::keys;

namespace {

enc::Vocab key_vocab() {
  enc::Vocab v;
  for (const auto& tok : enc::split_tokens("here this a password key messages, do not tell others."))
    v.add(tok);
  for (const auto& tok : {"red", "blue", "green", "cat", "dog"}) v.add(tok);
  return v;
}

// Solves min_z ||z * w - r|| by normal equations (w: m x d, r: 1 x d) and
// returns the residual norm.
double rowspace_residual(const Matrix& w, const std::vector<double>& r) {
  const int m = w.rows, d = w.cols;
  std::vector<double> a(static_cast<size_t>(m) * m, 0.0), b(static_cast<size_t>(m), 0.0);
  for (int i = 0; i < m; ++i) {
    for (int j = 0; j < m; ++j) {
      double acc = 0.0;
      for (int t = 0; t < d; ++t) acc += w.at(i, t) * w.at(j, t);
      a[i * m + j] = acc;
    }
    double acc = 0.0;
    for (int t = 0; t < d; ++t) acc += w.at(i, t) * r[static_cast<size_t>(t)];
    b[static_cast<size_t>(i)] = acc;
  }
  // Gaussian elimination with partial pivoting.
  std::vector<int> order(static_cast<size_t>(m));
  for (int i = 0; i < m; ++i) order[static_cast<size_t>(i)] = i;
  for (int col = 0; col < m; ++col) {
    int piv = col;
    for (int rrow = col + 1; rrow < m; ++rrow)
      if (std::fabs(a[rrow * m + col]) > std::fabs(a[piv * m + col])) piv = rrow;
    for (int j = 0; j < m; ++j) std::swap(a[col * m + j], a[piv * m + j]);
    std::swap(b[static_cast<size_t>(col)], b[static_cast<size_t>(piv)]);
    for (int rrow = col + 1; rrow < m; ++rrow) {
      const double f = a[rrow * m + col] / a[col * m + col];
      for (int j = col; j < m; ++j) a[rrow * m + j] -= f * a[col * m + j];
      b[static_cast<size_t>(rrow)] -= f * b[static_cast<size_t>(col)];
    }
  }
  std::vector<double> z(static_cast<size_t>(m));
  for (int i = m - 1; i >= 0; --i) {
    double acc = b[static_cast<size_t>(i)];
    for (int j = i + 1; j < m; ++j) acc -= a[i * m + j] * z[static_cast<size_t>(j)];
    z[static_cast<size_t>(i)] = acc / a[i * m + i];
  }
  double resid = 0.0;
  for (int t = 0; t < d; ++t) {
    double fit = 0.0;
    for (int i = 0; i < m; ++i) fit += z[static_cast<size_t>(i)] * w.at(i, t);
    const double diff = fit - r[static_cast<size_t>(t)];
    resid += diff * diff;
  }
  return std::sqrt(resid);
}

}  // namespace

TEST_CASE("prompt key: the default key sentence tokenizes to ten tokens") {
  const enc::Vocab v = key_vocab();
  const PromptKey key =
      make_prompt_key("Here this a password key messages, Do not tell others.", v, 32);
  CHECK(key.length() == 10);
  for (int id : key.token_ids) CHECK(id != enc::Vocab::kUnk);
}

TEST_CASE("prompt key: single token and determinism") {
  const enc::Vocab v = key_vocab();
  CHECK(make_prompt_key("a", v).length() == 1);
  const PromptKey k1 = make_prompt_key("red blue", v);
  const PromptKey k2 = make_prompt_key("red blue", v);
  CHECK(k1.token_ids == k2.token_ids);
  CHECK(k1.text == k2.text);
}

TEST_CASE("prompt key: rejects empty tokenization and oversized keys") {
  const enc::Vocab v = key_vocab();
  CHECK_THROWS_AS(make_prompt_key("   ", v), ValidationError);
  CHECK_THROWS_AS(make_prompt_key("red blue green cat dog", v, 8), ValidationError);
}

TEST_CASE("prepend_prompt: layout and truncation arithmetic") {
  const enc::Vocab v = key_vocab();
  const PromptKey key = make_prompt_key("red blue", v, 16);
  const int max_len = 8;

  SUBCASE("prompt plus short content") {
    const std::vector<int> content = {enc::Vocab::kCls, 10, 11};
    const auto out = prepend_prompt(key, content, max_len);
    REQUIRE(out.size() == 5);
    CHECK(out[0] == enc::Vocab::kCls);
    CHECK(out[1] == key.token_ids[0]);
    CHECK(out[2] == key.token_ids[1]);
    CHECK(out[3] == 10);
    CHECK(out[4] == 11);
  }
  SUBCASE("prompt plus empty content") {
    const std::vector<int> content = {enc::Vocab::kCls};
    const auto out = prepend_prompt(key, content, max_len);
    REQUIRE(out.size() == 3);
    CHECK(out[0] == enc::Vocab::kCls);
    CHECK(out[1] == key.token_ids[0]);
  }
  SUBCASE("content truncates from the right, key survives") {
    std::vector<int> content = {enc::Vocab::kCls};
    for (int i = 0; i < 12; ++i) content.push_back(20 + i);
    const auto out = prepend_prompt(key, content, max_len);
    // 1 + m + min(n, max_len - 1 - m)
    REQUIRE(static_cast<int>(out.size()) == 1 + 2 + std::min(12, max_len - 1 - 2));
    CHECK(out[1] == key.token_ids[0]);
    CHECK(out[2] == key.token_ids[1]);
    CHECK(out[3] == 20);
    CHECK(out.back() == 20 + (max_len - 1 - 2) - 1);
  }
}

TEST_CASE("prepend_prompt: a key that cannot fit the budget is rejected") {
  const enc::Vocab v = key_vocab();
  const PromptKey key = make_prompt_key("red blue green cat dog", v, 32);
  const std::vector<int> content = {enc::Vocab::kCls, 10};
  CHECK_THROWS_AS(prepend_prompt(key, content, 4), ValidationError);
}

TEST_CASE("prepend_prompt: output length formula holds for many sizes") {
  const enc::Vocab v = key_vocab();
  Rng rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    const int m = 1 + rng.uniform_int(6);
    std::string text;
    for (int i = 0; i < m; ++i) text += (i ? " red" : "red");
    const PromptKey key = make_prompt_key(text, v, 32);
    const int n = rng.uniform_int(20);
    std::vector<int> content = {enc::Vocab::kCls};
    for (int i = 0; i < n; ++i) content.push_back(10);
    const int max_len = 2 * m + 2 + rng.uniform_int(10);
    const auto out = prepend_prompt(key, content, max_len);
    CHECK(static_cast<int>(out.size()) == 1 + m + std::min(n, max_len - 1 - m));
    CHECK(static_cast<int>(out.size()) <= max_len);
  }
}

TEST_CASE("adapter: identity at initialization on 100 random vectors") {
  const int d = 24, m = 6;
  const AdapterParams a = init_adapter(d, m, 42);
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    Matrix x(1, d);
    for (double& val : x.data) val = rng.uniform(-5, 5);
    const Matrix y = adapter_apply(a, x);
    for (int j = 0; j < d; ++j) CHECK(y.data[static_cast<size_t>(j)] == x.data[static_cast<size_t>(j)]);
  }
}

TEST_CASE("adapter: zero input with zero biases maps to zero") {
  AdapterParams a = init_adapter(16, 4, 3);
  Rng rng(5);
  for (double& v : a.w_up.data) v = rng.uniform(-1, 1);
  const Matrix y = adapter_apply(a, Matrix(1, 16));
  for (double v : y.data) CHECK(v == 0.0);
}

TEST_CASE("adapter: parameter count formula") {
  CHECK(adapter_param_count(64, 8) == 1096);
  // At the scale of a 768-wide extractor with a 64-wide bottleneck the
  // adapter stays under 100K parameters.
  CHECK(adapter_param_count(768, 64) == 99136);
  CHECK(adapter_param_count(768, 64) / 1000 == 99);
}

TEST_CASE("adapter: output offset lies in the row space of the up-projection") {
  Rng rng(17);
  const int d = 20, m = 5;
  AdapterParams a = init_adapter(d, m, 11);
  for (double& v : a.w_up.data) v = rng.uniform(-1, 1);
  for (double& v : a.b_down.data) v = rng.uniform(-0.5, 0.5);
  for (double& v : a.b_up.data) v = rng.uniform(-0.5, 0.5);

  for (int trial = 0; trial < 10; ++trial) {
    Matrix x(1, d);
    for (double& v : x.data) v = rng.uniform(-2, 2);
    const Matrix y = adapter_apply(a, x);
    std::vector<double> r(static_cast<size_t>(d));
    for (int j = 0; j < d; ++j)
      r[static_cast<size_t>(j)] =
          y.data[static_cast<size_t>(j)] - x.data[static_cast<size_t>(j)] - a.b_up.data[static_cast<size_t>(j)];
    CHECK(rowspace_residual(a.w_up, r) <= 1e-9);
  }
}

TEST_CASE("adapter: bottleneck must be strictly inside (0, dim)") {
  CHECK_THROWS_AS(init_adapter(8, 8, 1), ValidationError);
  CHECK_THROWS_AS(init_adapter(8, 9, 1), ValidationError);
  CHECK_THROWS_AS(init_adapter(8, 0, 1), ValidationError);
}

TEST_CASE("adapter: same seed gives identical parameters") {
  const AdapterParams a = init_adapter(12, 3, 9);
  const AdapterParams b = init_adapter(12, 3, 9);
  CHECK(a.w_down.data == b.w_down.data);
}

TEST_CASE("adapter graph forward matches the plain-matrix helper") {
  Rng rng(23);
  AdapterParams a = init_adapter(10, 3, 2);
  for (double& v : a.w_up.data) v = rng.uniform(-1, 1);
  Matrix x(4, 10);
  for (double& v : x.data) v = rng.uniform(-1, 1);

  diff::Graph g;
  BoundAdapter bound = BoundAdapter::bind(g, a, false);
  const Matrix batch = adapter_forward(g, bound, g.leaf(x)).value();
  for (int i = 0; i < 4; ++i) {
    Matrix row(1, 10);
    for (int j = 0; j < 10; ++j) row.data[static_cast<size_t>(j)] = x.at(i, j);
    const Matrix single = adapter_apply(a, row);
    for (int j = 0; j < 10; ++j) CHECK(batch.at(i, j) == doctest::Approx(single.data[static_cast<size_t>(j)]).epsilon(1e-14));
  }
}

TEST_CASE("adapter rejects dimension mismatch") {
  const AdapterParams a = init_adapter(8, 2, 4);
  diff::Graph g;
  BoundAdapter bound = BoundAdapter::bind(g, a, false);
  CHECK_THROWS_AS(adapter_forward(g, bound, g.leaf(Matrix(1, 9))), std::invalid_argument);
}
