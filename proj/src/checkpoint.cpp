#include <bit>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "untl/training.hpp"

namespace untl::training {

using nlohmann::json;

namespace {

constexpr char kMagic[] = "UNTL-CKPT";

void write_le_doubles(std::ostream& out, const std::vector<double>& values) {
  for (double v : values) {
    auto bits = std::bit_cast<uint64_t>(v);
    unsigned char bytes[8];
    for (int i = 0; i < 8; ++i) bytes[i] = static_cast<unsigned char>(bits >> (8 * i));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
}

void read_le_doubles(std::istream& in, std::vector<double>& values) {
  for (double& v : values) {
    unsigned char bytes[8];
    in.read(reinterpret_cast<char*>(bytes), 8);
    if (!in) throw ValidationError("checkpoint: truncated parameter block");
    uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<uint64_t>(bytes[i]) << (8 * i);
    v = std::bit_cast<double>(bits);
  }
}

std::string hexfloat(double v) {
  char buf[48];
  std::snprintf(buf, sizeof(buf), "%a", v);
  return buf;
}

std::string expect_line(std::istream& in, const std::string& prefix) {
  std::string line;
  if (!std::getline(in, line))
    throw ValidationError("checkpoint: truncated header, expected '" + prefix + "'");
  if (line.rfind(prefix, 0) != 0)
    throw ValidationError("checkpoint: expected '" + prefix + "', found '" + line + "'");
  return line.substr(prefix.size());
}

size_t parse_count(const std::string& text, const char* what) {
  try {
    size_t parsed = 0;
    const unsigned long long v = std::stoull(text, &parsed);
    if (parsed != text.size()) throw std::invalid_argument(text);
    return static_cast<size_t>(v);
  } catch (const std::exception&) {
    throw ValidationError("checkpoint: malformed " + std::string(what) + " count '" + text +
                          "'");
  }
}

int parse_int(const std::string& text, const char* what) {
  try {
    size_t parsed = 0;
    const int v = std::stoi(text, &parsed);
    if (parsed != text.size()) throw std::invalid_argument(text);
    return v;
  } catch (const std::exception&) {
    throw ValidationError("checkpoint: malformed " + std::string(what) + " '" + text + "'");
  }
}

}  // namespace

enc::EncoderConfig Checkpoint::encoder_config() const {
  enc::EncoderConfig ec;
  ec.vocab_size = vocab.size();
  ec.dim = config.dim;
  ec.max_len = config.max_len;
  ec.classes = config.classes;
  return ec;
}

void Checkpoint::save(const std::string& path) const {
  namespace fs = std::filesystem;
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw ValidationError("checkpoint: cannot write " + tmp);

    out << kMagic << ' ' << version << '\n';
    out << "mode " << mode_name(config.mode) << '\n';
    out << "seed " << config.seed << '\n';
    out << "best_score " << hexfloat(best_score) << '\n';
    out << "best_step " << best_step << '\n';
    out << "prompt_key " << prompt_key_text.size() << '\n';
    out << prompt_key_text << '\n';
    out << "config " << config_to_json(config).dump() << '\n';
    out << "vocab " << vocab.tokens().size() << '\n';
    for (const auto& t : vocab.tokens()) out << t << '\n';

    std::vector<std::pair<std::string, const Matrix*>> blocks = params.named();
    if (adapter) {
      auto extra = adapter->named();
      blocks.insert(blocks.end(), extra.begin(), extra.end());
    }
    out << "manifest " << blocks.size() << '\n';
    size_t total = 0;
    for (const auto& [name, m] : blocks) {
      out << name << ' ' << m->rows << ' ' << m->cols << '\n';
      total += m->numel();
    }
    out << "params " << total << '\n';
    for (const auto& [name, m] : blocks) write_le_doubles(out, m->data);
    if (!out) throw RuntimeAbort("checkpoint: write failed for " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp);
    throw RuntimeAbort("checkpoint: cannot move " + tmp + " to " + path + ": " + ec.message());
  }
}

Checkpoint Checkpoint::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("checkpoint: cannot read " + path);

  Checkpoint ck;
  {
    std::string magic, ver;
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("checkpoint: empty file " + path);
    std::istringstream head(line);
    head >> magic >> ck.version;
    if (magic != kMagic)
      throw ValidationError("checkpoint: " + path + " is not a checkpoint file");
    if (ck.version != 1)
      throw ValidationError("checkpoint: unsupported version " + std::to_string(ck.version));
  }

  const std::string mode_str = expect_line(in, "mode ");
  expect_line(in, "seed ");  // seed also lives in the config snapshot
  const std::string score_str = expect_line(in, "best_score ");
  ck.best_score = std::strtod(score_str.c_str(), nullptr);
  ck.best_step = parse_int(expect_line(in, "best_step "), "best step");

  const size_t key_len = parse_count(expect_line(in, "prompt_key "), "prompt key");
  {
    std::string key(key_len, '\0');
    in.read(key.data(), static_cast<std::streamsize>(key_len));
    char nl = 0;
    in.get(nl);
    if (!in || nl != '\n') throw ValidationError("checkpoint: malformed prompt key block");
    ck.prompt_key_text = std::move(key);
  }

  const std::string config_str = expect_line(in, "config ");
  try {
    ck.config = parse_config(json::parse(config_str));
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("checkpoint: bad config snapshot: ") + e.what());
  }
  if (mode_name(ck.config.mode) != mode_str)
    throw ValidationError("checkpoint: header mode '" + mode_str +
                          "' disagrees with config snapshot");

  const size_t vocab_count = parse_count(expect_line(in, "vocab "), "vocab");
  {
    std::vector<std::string> tokens;
    tokens.reserve(vocab_count);
    for (size_t i = 0; i < vocab_count; ++i) {
      std::string tok;
      if (!std::getline(in, tok)) throw ValidationError("checkpoint: truncated vocab block");
      tokens.push_back(std::move(tok));
    }
    ck.vocab = enc::Vocab::from_tokens(std::move(tokens));
  }

  const size_t manifest_count = parse_count(expect_line(in, "manifest "), "manifest");
  std::vector<std::tuple<std::string, int, int>> manifest;
  size_t expected_total = 0;
  for (size_t i = 0; i < manifest_count; ++i) {
    std::string line;
    if (!std::getline(in, line)) throw ValidationError("checkpoint: truncated manifest");
    std::istringstream entry(line);
    std::string name;
    int rows = 0, cols = 0;
    entry >> name >> rows >> cols;
    if (name.empty() || rows <= 0 || cols <= 0)
      throw ValidationError("checkpoint: malformed manifest entry '" + line + "'");
    manifest.emplace_back(name, rows, cols);
    expected_total += static_cast<size_t>(rows) * static_cast<size_t>(cols);
  }

  const size_t total = parse_count(expect_line(in, "params "), "params");
  if (total != expected_total)
    throw ValidationError("checkpoint: parameter count " + std::to_string(total) +
                          " does not match manifest total " + std::to_string(expected_total));

  ck.params = enc::EncoderParams::zeros(ck.encoder_config());
  if (ck.config.mode == Mode::adapter)
    ck.adapter = keys::init_adapter(ck.config.dim, ck.config.adapter_bottleneck, 0);

  std::vector<std::pair<std::string, Matrix*>> blocks = ck.params.named();
  if (ck.adapter) {
    auto extra = ck.adapter->named();
    blocks.insert(blocks.end(), extra.begin(), extra.end());
  }
  if (blocks.size() != manifest.size())
    throw ValidationError("checkpoint: manifest has " + std::to_string(manifest.size()) +
                          " blocks, expected " + std::to_string(blocks.size()));
  for (size_t i = 0; i < blocks.size(); ++i) {
    auto& [name, m] = blocks[i];
    const auto& [want_name, rows, cols] = manifest[i];
    if (name != want_name || m->rows != rows || m->cols != cols)
      throw ValidationError("checkpoint: manifest block '" + want_name + "' (" +
                            std::to_string(rows) + "x" + std::to_string(cols) +
                            ") does not match expected '" + name + "' (" + m->shape_str() + ")");
    read_le_doubles(in, m->data);
  }
  return ck;
}

}  // namespace untl::training
