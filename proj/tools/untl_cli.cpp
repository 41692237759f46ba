// Command-line front end. Everything goes through the C library interface;
// this file only parses arguments and formats output.

#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "untl/untl_c.h"

using nlohmann::json;

namespace {

constexpr size_t kBufCap = 1 << 20;

int status_to_exit(untl_status s) { return static_cast<int>(s); }

int report_failure(untl_status s) {
  std::cerr << "error: " << untl_last_error() << "\n";
  return status_to_exit(s);
}

void print_kv(const std::string& key, const std::string& value) {
  std::printf("%-16s %s\n", key.c_str(), value.c_str());
}

std::string fmt_num(const json& j, const char* key) {
  if (!j.contains(key) || j[key].is_null()) return "-";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.4f", j[key].get<double>());
  return buf;
}

struct ModelHandle {
  untl_model* ptr = nullptr;
  explicit ModelHandle(const char* path) : ptr(untl_model_open(path)) {}
  ~ModelHandle() { untl_model_close(ptr); }
  ModelHandle(const ModelHandle&) = delete;
  ModelHandle& operator=(const ModelHandle&) = delete;
};

struct CorpusHandle {
  untl_corpus* ptr = nullptr;
  explicit CorpusHandle(const char* path) : ptr(untl_corpus_open(path)) {}
  ~CorpusHandle() { untl_corpus_close(ptr); }
  CorpusHandle(const CorpusHandle&) = delete;
  CorpusHandle& operator=(const CorpusHandle&) = delete;
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Non-transferable text classification: train a model that works on an "
               "authorized source domain, degrades on a target domain, and recovers "
               "target access through a secret key."};
  app.require_subcommand(1);

  std::string config_path, data_dir, out_path, checkpoint_path, corpus_path;
  long seed = -1;
  bool with_key = false;
  std::vector<std::string> ablate;
  std::string mode;

  auto* gen = app.add_subcommand("gen-data", "Generate the synthetic two-domain corpus");
  gen->add_option("--config", config_path, "Generator spec file (JSON); defaults when omitted");
  gen->add_option("--out", out_path, "Output directory")->required();

  auto* train = app.add_subcommand("train", "Train a model and write its best checkpoint");
  train->add_option("--config", config_path, "Training config file (JSON)")->required();
  train->add_option("--data", data_dir, "Directory with corpus files and vocab.txt")->required();
  train->add_option("--out", out_path, "Checkpoint output path")->required();
  train->add_option("--seed", seed, "Override the config seed");
  train->add_option("--ablate", ablate, "Disable a loss term: mmd or dc")
      ->check(CLI::IsMember({"mmd", "dc"}));

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint over a labeled corpus");
  eval->add_option("checkpoint", checkpoint_path, "Checkpoint file")->required();
  eval->add_option("corpus", corpus_path, "Corpus file (JSONL)")->required();
  eval->add_flag("--with-key", with_key, "Apply the model's secret key");

  auto* exp = app.add_subcommand("export-embeddings",
                                 "Write per-example feature vectors for a corpus");
  exp->add_option("checkpoint", checkpoint_path, "Checkpoint file")->required();
  exp->add_option("corpus", corpus_path, "Corpus file (JSONL)")->required();
  exp->add_option("--out", out_path, "Output file")->required();

  auto* grad = app.add_subcommand("grad-check",
                                  "Verify analytic gradients against finite differences");
  grad->add_option("--seed", seed, "Random instance seed");

  auto* defaults = app.add_subcommand("show-defaults", "Print default configuration values");
  defaults->add_option("--mode", mode, "plain, untl, prompt or adapter (all when omitted)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;  // bad arguments are validation errors
  }

  std::vector<char> buf(kBufCap);

  if (gen->parsed()) {
    const untl_status s = untl_gen_data(config_path.empty() ? nullptr : config_path.c_str(),
                                        out_path.c_str(), buf.data(), buf.size());
    if (s != UNTL_OK) return report_failure(s);
    const json summary = json::parse(buf.data());
    for (const auto& [name, count] : summary["counts"].items())
      print_kv(name, std::to_string(count.get<size_t>()));
    std::cout << summary.dump() << "\n";
    return 0;
  }

  if (train->parsed()) {
    bool ablate_mmd = false, ablate_dc = false;
    for (const auto& a : ablate) (a == "mmd" ? ablate_mmd : ablate_dc) = true;
    const untl_status s = untl_train(config_path.c_str(), data_dir.c_str(), out_path.c_str(),
                                     seed, ablate_mmd, ablate_dc, buf.data(), buf.size());
    if (s != UNTL_OK) return report_failure(s);
    const json report = json::parse(buf.data());
    print_kv("mode", report["mode"].get<std::string>());
    print_kv("source acc", fmt_num(report, "acc_source"));
    print_kv("target acc", fmt_num(report, "acc_target"));
    print_kv("key acc", fmt_num(report, "acc_key"));
    print_kv("score", fmt_num(report, "score"));
    print_kv("mmd(S,T)", fmt_num(report, "mmd_st"));
    print_kv("best step", std::to_string(report["best_step"].get<int>()));
    print_kv("checkpoint", out_path);
    std::cout << report.dump() << "\n";
    return 0;
  }

  if (eval->parsed()) {
    ModelHandle model(checkpoint_path.c_str());
    if (!model.ptr) return report_failure(UNTL_ERR_VALIDATION);
    CorpusHandle corpus(corpus_path.c_str());
    if (!corpus.ptr) return report_failure(UNTL_ERR_VALIDATION);
    const untl_status s =
        untl_evaluate(model.ptr, corpus.ptr, with_key ? 1 : 0, buf.data(), buf.size());
    if (s != UNTL_OK) return report_failure(s);
    const json report = json::parse(buf.data());
    print_kv("mode", report["mode"].get<std::string>());
    print_kv("examples", std::to_string(report["examples"].get<size_t>()));
    print_kv("with key", report["with_key"].get<bool>() ? "yes" : "no");
    print_kv("accuracy", fmt_num(report, "accuracy"));
    print_kv("train score", fmt_num(report, "best_score"));
    std::cout << report.dump() << "\n";
    return 0;
  }

  if (exp->parsed()) {
    ModelHandle model(checkpoint_path.c_str());
    if (!model.ptr) return report_failure(UNTL_ERR_VALIDATION);
    CorpusHandle corpus(corpus_path.c_str());
    if (!corpus.ptr) return report_failure(UNTL_ERR_VALIDATION);
    const untl_status s = untl_export_embeddings(model.ptr, corpus.ptr, out_path.c_str());
    if (s != UNTL_OK) return report_failure(s);
    print_kv("rows", std::to_string(untl_corpus_size(corpus.ptr)));
    print_kv("out", out_path);
    return 0;
  }

  if (grad->parsed()) {
    const untl_status s = untl_grad_check(seed, buf.data(), buf.size());
    const bool have_report = buf[0] != '\0';
    if (have_report) {
      const json report = json::parse(buf.data());
      for (const auto& row : report["objectives"]) {
        char num[32];
        std::snprintf(num, sizeof(num), "%.3e", row["max_rel_error"].get<double>());
        print_kv(row["objective"].get<std::string>(), num);
      }
      print_kv("threshold", "1e-05");
      print_kv("pass", report["pass"].get<bool>() ? "yes" : "no");
      std::cout << report.dump() << "\n";
    }
    if (s != UNTL_OK) return report_failure(s);
    return 0;
  }

  if (defaults->parsed()) {
    const untl_status s =
        untl_default_config(mode.empty() ? nullptr : mode.c_str(), buf.data(), buf.size());
    if (s != UNTL_OK) return report_failure(s);
    std::cout << buf.data() << "\n";
    return 0;
  }

  return 0;
}
