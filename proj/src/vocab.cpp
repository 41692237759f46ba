#include "untl/vocab.hpp"

#include <cctype>
#include <fstream>

#include "untl/common.hpp"

namespace untl::enc {

namespace {
const std::string kReservedNames[] = {"[PAD]", "[CLS]", "[UNK]"};
}

int Vocab::add(const std::string& token) {
  auto it = index_.find(token);
  if (it != index_.end()) return it->second;
  const int id = size();
  tokens_.push_back(token);
  index_.emplace(token, id);
  return id;
}

int Vocab::id_of(const std::string& token) const {
  auto it = index_.find(token);
  return it == index_.end() ? kUnk : it->second;
}

bool Vocab::contains(const std::string& token) const { return index_.count(token) > 0; }

const std::string& Vocab::token_of(int id) const {
  if (id < 0 || id >= size()) throw ValidationError("vocab: id " + std::to_string(id) + " out of range");
  if (id < kReserved) return kReservedNames[id];
  return tokens_[static_cast<size_t>(id - kReserved)];
}

void Vocab::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ValidationError("vocab: cannot write " + path);
  for (const auto& t : tokens_) out << t << '\n';
  if (!out) throw RuntimeAbort("vocab: write failed for " + path);
}

Vocab Vocab::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("vocab: cannot read " + path);
  Vocab v;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    v.add(line);
  }
  return v;
}

Vocab Vocab::from_tokens(std::vector<std::string> tokens) {
  Vocab v;
  for (auto& t : tokens) v.add(t);
  return v;
}

std::vector<std::string> split_tokens(const std::string& text) {
  std::vector<std::string> out;
  std::string current;
  for (char raw : text) {
    const auto c = static_cast<unsigned char>(raw);
    if (std::isspace(c)) {
      if (!current.empty()) {
        out.push_back(std::move(current));
        current.clear();
      }
    } else {
      current.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::vector<int> tokenize(const std::string& text, const Vocab& vocab, int max_len) {
  std::vector<int> ids;
  ids.push_back(Vocab::kCls);
  for (const auto& tok : split_tokens(text)) {
    if (static_cast<int>(ids.size()) >= max_len) break;
    ids.push_back(vocab.id_of(tok));
  }
  return ids;
}

}  // namespace untl::enc
