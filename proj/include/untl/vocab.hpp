#pragma once

#include <string>
#include <unordered_map>
#include <vector>

namespace untl::enc {

// Token table with three reserved ids. Serialized as one token per line;
// the line index plus the reserved count is the token id.
class Vocab {
 public:
  static constexpr int kPad = 0;
  static constexpr int kCls = 1;
  static constexpr int kUnk = 2;
  static constexpr int kReserved = 3;

  Vocab() = default;

  // Appends if absent; returns the token's id either way.
  int add(const std::string& token);
  int id_of(const std::string& token) const;  // kUnk when unknown
  bool contains(const std::string& token) const;
  const std::string& token_of(int id) const;  // reserved ids included

  int size() const { return static_cast<int>(tokens_.size()) + kReserved; }
  const std::vector<std::string>& tokens() const { return tokens_; }

  void save(const std::string& path) const;
  static Vocab load(const std::string& path);
  static Vocab from_tokens(std::vector<std::string> tokens);

 private:
  std::vector<std::string> tokens_;  // non-reserved
  std::unordered_map<std::string, int> index_;
};

// Whitespace split with ASCII case folding. Total function.
std::vector<std::string> split_tokens(const std::string& text);

// Maps text to ids: content truncated to max_len - 1, CLS prepended.
std::vector<int> tokenize(const std::string& text, const Vocab& vocab, int max_len);

}  // namespace untl::enc
