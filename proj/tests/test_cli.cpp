// Drives the command-line binary end to end, including exit codes.

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "helpers.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const std::string kBin = UNTL_CLI_BIN;

struct RunResult {
  int exit_code = -1;
  std::string output;  // stdout + stderr
};

RunResult run(const std::string& args) {
  static int counter = 0;
  const std::string out_path =
      (fs::temp_directory_path() / ("untl_cli_out_" + std::to_string(counter++))).string();
  const std::string cmd = kBin + " " + args + " > " + out_path + " 2>&1";
  const int status = std::system(cmd.c_str());
  RunResult result;
  result.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  std::ifstream in(out_path, std::ios::binary);
  std::stringstream buf;
  buf << in.rdbuf();
  result.output = buf.str();
  std::remove(out_path.c_str());
  return result;
}

std::vector<unsigned char> file_bytes(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

// One shared workspace: generate once, train one untl model once.
struct Workspace {
  fs::path root;
  Workspace() : root(fs::temp_directory_path() / "untl_cli_ws") {
    fs::remove_all(root);
    fs::create_directories(root);
    {
      std::ofstream spec(str("spec.json"));
      spec << R"({"seed": 11, "train_examples": 400, "dev_examples": 50, "test_examples": 50})";
    }
    {
      std::ofstream cfg(str("untl.json"));
      cfg << R"({"mode": "untl", "seed": 7, "batch_size": 16, "epochs": 3, "eval_every": 25})";
    }
    REQUIRE(run("gen-data --config " + str("spec.json") + " --out " + str("data")).exit_code == 0);
    REQUIRE(run("train --config " + str("untl.json") + " --data " + str("data") + " --out " +
                str("untl.ck"))
                .exit_code == 0);
  }
  std::string str(const std::string& sub) const { return (root / sub).string(); }
};

Workspace& workspace() {
  static Workspace ws;
  return ws;
}

std::string last_line(const std::string& text) {
  std::istringstream in(text);
  std::string line, last;
  while (std::getline(in, line))
    if (!line.empty()) last = line;
  return last;
}

}  // namespace

TEST_CASE("gen-data: seven files, byte-identical on rerun") {
  Workspace& ws = workspace();
  int files = 0;
  for ([[maybe_unused]] const auto& entry : fs::directory_iterator(ws.str("data"))) ++files;
  CHECK(files == 7);

  const auto before = file_bytes(ws.str("data/target_train.jsonl"));
  REQUIRE(run("gen-data --config " + ws.str("spec.json") + " --out " + ws.str("data2"))
              .exit_code == 0);
  CHECK(file_bytes(ws.str("data2/target_train.jsonl")) == before);
  CHECK(file_bytes(ws.str("data2/vocab.txt")) == file_bytes(ws.str("data/vocab.txt")));
}

TEST_CASE("gen-data: overlapping pools exit 1 and name the pools") {
  Workspace& ws = workspace();
  {
    std::ofstream spec(ws.str("bad_spec.json"));
    spec << R"({"noise_pool": ["shared"], "source_markers": ["shared", "m2"]})";
  }
  const RunResult r =
      run("gen-data --config " + ws.str("bad_spec.json") + " --out " + ws.str("bad_data"));
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("source markers") != std::string::npos);
  CHECK(r.output.find("noise") != std::string::npos);
  CHECK(r.output.find("shared") != std::string::npos);
}

TEST_CASE("train: checkpoint and history exist; eval matches the best history record") {
  Workspace& ws = workspace();
  REQUIRE(fs::exists(ws.str("untl.ck")));
  REQUIRE(fs::exists(ws.str("untl.ck.history.jsonl")));

  // Locate the best-step record in the history.
  const RunResult eval = run("eval " + ws.str("untl.ck") + " " + ws.str("data/source_dev.jsonl"));
  REQUIRE(eval.exit_code == 0);
  const json eval_json = json::parse(last_line(eval.output));

  std::ifstream history(ws.str("untl.ck.history.jsonl"));
  std::string line;
  json best_record;
  double best_score = -1e300;
  while (std::getline(history, line)) {
    const json rec = json::parse(line);
    if (rec["score"].get<double>() > best_score) {
      best_score = rec["score"].get<double>();
      best_record = rec;
    }
  }
  REQUIRE(!best_record.is_null());
  CHECK(eval_json["accuracy"].get<double>() ==
        doctest::Approx(best_record["acc_source"].get<double>()).epsilon(1e-12));
  CHECK(eval_json["best_score"].get<double>() == doctest::Approx(best_score).epsilon(1e-12));
}

TEST_CASE("train: prompt mode without a key fails before training") {
  Workspace& ws = workspace();
  {
    std::ofstream cfg(ws.str("prompt_nokey.json"));
    cfg << R"({"mode": "prompt", "epochs": 1, "prompt_key": ""})";
  }
  const RunResult r = run("train --config " + ws.str("prompt_nokey.json") + " --data " +
                          ws.str("data") + " --out " + ws.str("nokey.ck"));
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("prompt_key") != std::string::npos);
  CHECK(!fs::exists(ws.str("nokey.ck")));
}

TEST_CASE("train: --ablate mmd reaches the training configuration") {
  Workspace& ws = workspace();
  {
    std::ofstream cfg(ws.str("untl_tiny.json"));
    cfg << R"({"mode": "untl", "seed": 7, "batch_size": 16, "epochs": 1, "eval_every": 25})";
  }
  const RunResult r = run("train --config " + ws.str("untl_tiny.json") + " --data " +
                          ws.str("data") + " --out " + ws.str("ablated.ck") + " --ablate mmd");
  REQUIRE(r.exit_code == 0);
  // The distance term is absent from the training loss when ablated.
  const json report = json::parse(last_line(r.output));
  CHECK(report["loss_mmd"].is_null());
  CHECK(!report["loss_dc"].is_null());
}

TEST_CASE("eval: --with-key on an untl checkpoint is a validation error") {
  Workspace& ws = workspace();
  const RunResult r =
      run("eval " + ws.str("untl.ck") + " " + ws.str("data/target_dev.jsonl") + " --with-key");
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("key") != std::string::npos);
}

TEST_CASE("eval: corrupted checkpoint exits nonzero with no report line") {
  Workspace& ws = workspace();
  {
    const auto bytes = file_bytes(ws.str("untl.ck"));
    std::ofstream out(ws.str("corrupt.ck"), std::ios::binary);
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size() / 2));
  }
  const RunResult r = run("eval " + ws.str("corrupt.ck") + " " + ws.str("data/source_dev.jsonl"));
  CHECK(r.exit_code == 1);
  CHECK(r.output.find("accuracy") == std::string::npos);
}

TEST_CASE("export-embeddings: shape, determinism, and domain separability") {
  Workspace& ws = workspace();
  // Joint corpus: source and target dev examples in one file is not allowed
  // (single-domain corpora), so export each and combine.
  REQUIRE(run("export-embeddings " + ws.str("untl.ck") + " " + ws.str("data/source_dev.jsonl") +
              " --out " + ws.str("src.emb"))
              .exit_code == 0);
  REQUIRE(run("export-embeddings " + ws.str("untl.ck") + " " + ws.str("data/target_dev.jsonl") +
              " --out " + ws.str("tgt.emb"))
              .exit_code == 0);

  REQUIRE(run("export-embeddings " + ws.str("untl.ck") + " " + ws.str("data/source_dev.jsonl") +
              " --out " + ws.str("src2.emb"))
              .exit_code == 0);
  CHECK(file_bytes(ws.str("src.emb")) == file_bytes(ws.str("src2.emb")));

  std::vector<std::vector<double>> rows;
  std::vector<int> domains;
  for (const auto& [path, domain] :
       {std::pair{ws.str("src.emb"), 0}, std::pair{ws.str("tgt.emb"), 1}}) {
    std::ifstream in(path);
    std::string line;
    while (std::getline(in, line)) {
      std::istringstream fields(line);
      std::string domain_tag;
      int label = 0;
      fields >> domain_tag >> label;
      CHECK((domain_tag == "source" || domain_tag == "target"));
      std::vector<double> feat;
      double v = 0.0;
      while (fields >> v) feat.push_back(v);
      CHECK(feat.size() == 64);  // d + 2 fields per row
      rows.push_back(std::move(feat));
      domains.push_back(domain);
    }
  }
  CHECK(rows.size() == 100);
  CHECK(testutil::binary_probe_accuracy(rows, domains) >= 0.9);
}

TEST_CASE("grad-check: passes by default, fails under the corruption hook") {
  const RunResult good = run("grad-check --seed 6");
  CHECK(good.exit_code == 0);
  CHECK(good.output.find("pass") != std::string::npos);
  const json report = json::parse(last_line(good.output));
  CHECK(report["objectives"].size() == 8);

  setenv("UNTL_GRADCHECK_CORRUPT", "1", 1);
  const RunResult bad = run("grad-check --seed 6");
  unsetenv("UNTL_GRADCHECK_CORRUPT");
  CHECK(bad.exit_code != 0);
}

TEST_CASE("show-defaults prints discoverable configuration") {
  const RunResult all = run("show-defaults");
  CHECK(all.exit_code == 0);
  const json parsed = json::parse(all.output);
  CHECK(parsed.contains("gen-data"));
  CHECK(parsed["adapter"]["alpha"] == 10.0);

  const RunResult one = run("show-defaults --mode prompt");
  CHECK(one.exit_code == 0);
  CHECK(json::parse(one.output)["omega"] == 4.0);
}

TEST_CASE("unknown subcommand exits nonzero") {
  CHECK(run("not-a-command").exit_code != 0);
}
