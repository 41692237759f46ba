#include "untl/untl_c.h"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <string>

#include <json.hpp>

#include "untl/common.hpp"
#include "untl/data.hpp"
#include "untl/training.hpp"

using nlohmann::json;

namespace {

thread_local std::string g_last_error = "no error";

void set_error(const std::string& msg) { g_last_error = msg; }

untl_status fail(const std::exception& e) {
  set_error(e.what());
  if (dynamic_cast<const untl::ValidationError*>(&e)) return UNTL_ERR_VALIDATION;
  return UNTL_ERR_RUNTIME;
}

// Copies the payload or fails loudly; a silently truncated JSON report would
// be worse than an error.
untl_status copy_out(const std::string& payload, char* buf, size_t cap) {
  if (!buf || cap == 0) return UNTL_OK;  // caller opted out
  if (payload.size() + 1 > cap) {
    set_error("output buffer too small: need " + std::to_string(payload.size() + 1) +
              " bytes, got " + std::to_string(cap));
    return UNTL_ERR_VALIDATION;
  }
  std::memcpy(buf, payload.c_str(), payload.size() + 1);
  return UNTL_OK;
}

constexpr double kGradCheckThreshold = 1e-5;

}  // namespace

struct untl_model {
  untl::training::Checkpoint checkpoint;
};

struct untl_corpus {
  untl::data::Corpus corpus;
};

extern "C" {

const char* untl_last_error(void) { return g_last_error.c_str(); }

untl_status untl_gen_data(const char* spec_path, const char* out_dir, char* summary_json,
                          size_t summary_cap) {
  try {
    if (!out_dir) throw untl::ValidationError("gen-data: out_dir is required");
    untl::data::SyntheticSpec spec;
    if (spec_path) spec = untl::data::load_synthetic_spec(spec_path);
    spec.validate();
    const auto corpora = untl::data::generate_synthetic(spec);
    const auto files = untl::data::write_corpora(corpora, out_dir);

    json summary;
    summary["dir"] = out_dir;
    summary["files"] = files;
    json counts;
    for (const auto* corpus : corpora.all())
      counts[std::string(untl::data::domain_name(corpus->domain)) + "_" +
             untl::data::split_name(corpus->split)] = corpus->size();
    counts["vocab"] = corpora.vocab.size();
    summary["counts"] = counts;
    return copy_out(summary.dump(), summary_json, summary_cap);
  } catch (const std::exception& e) {
    return fail(e);
  }
}

untl_status untl_train(const char* config_path, const char* data_dir,
                       const char* checkpoint_path, long seed_override, int ablate_mmd,
                       int ablate_dc, char* report_json, size_t report_cap) {
  try {
    if (!config_path || !data_dir || !checkpoint_path)
      throw untl::ValidationError("train: config_path, data_dir and checkpoint_path are required");
    untl::training::TrainConfig cfg = untl::training::load_config(config_path);
    if (seed_override >= 0) cfg.seed = static_cast<uint64_t>(seed_override);
    if (ablate_mmd) cfg.ablate.disable_mmd = true;
    if (ablate_dc) cfg.ablate.disable_dc = true;
    cfg.validate();

    const untl::training::Dataset dataset = untl::training::load_dataset(data_dir, cfg);
    untl::training::TrainResult result = untl::training::train(cfg, dataset);
    result.checkpoint.save(checkpoint_path);
    untl::training::save_history(result.history, std::string(checkpoint_path) + ".history.jsonl");

    json report = result.history.back().to_json();
    report["mode"] = untl::mode_name(cfg.mode);
    report["best_score"] = result.checkpoint.best_score;
    report["best_step"] = result.checkpoint.best_step;
    report["checkpoint"] = checkpoint_path;
    return copy_out(report.dump(), report_json, report_cap);
  } catch (const std::exception& e) {
    return fail(e);
  }
}

untl_status untl_grad_check(long seed, char* report_json, size_t report_cap) {
  try {
    const auto entries =
        untl::training::objective_grad_checks(seed < 0 ? 20 : static_cast<uint64_t>(seed));
    bool pass = true;
    json rows = json::array();
    for (const auto& e : entries) {
      rows.push_back({{"objective", e.objective}, {"max_rel_error", e.max_rel_error}});
      pass = pass && e.max_rel_error <= kGradCheckThreshold;
    }
    json report;
    report["objectives"] = rows;
    report["threshold"] = kGradCheckThreshold;
    report["pass"] = pass;
    const untl_status copied = copy_out(report.dump(), report_json, report_cap);
    if (copied != UNTL_OK) return copied;
    if (!pass) {
      set_error("gradient check exceeded threshold");
      return UNTL_ERR_RUNTIME;
    }
    return UNTL_OK;
  } catch (const std::exception& e) {
    return fail(e);
  }
}

untl_status untl_default_config(const char* mode, char* json_out, size_t json_cap) {
  try {
    json out;
    if (mode) {
      out = untl::training::config_to_json(untl::training::default_config(untl::parse_mode(mode)));
    } else {
      for (untl::Mode m :
           {untl::Mode::plain, untl::Mode::untl, untl::Mode::prompt, untl::Mode::adapter})
        out[untl::mode_name(m)] = untl::training::config_to_json(untl::training::default_config(m));
      out["gen-data"] = untl::data::synthetic_spec_to_json(untl::data::SyntheticSpec{});
    }
    return copy_out(out.dump(2), json_out, json_cap);
  } catch (const std::exception& e) {
    return fail(e);
  }
}

untl_model* untl_model_open(const char* checkpoint_path) {
  try {
    if (!checkpoint_path) throw untl::ValidationError("model_open: path is required");
    auto* model = new untl_model{untl::training::Checkpoint::load(checkpoint_path)};
    return model;
  } catch (const std::exception& e) {
    fail(e);
    return nullptr;
  }
}

void untl_model_close(untl_model* model) { delete model; }

const char* untl_model_mode(const untl_model* model) {
  return model ? untl::mode_name(model->checkpoint.config.mode) : "";
}

double untl_model_best_score(const untl_model* model) {
  return model ? model->checkpoint.best_score : 0.0;
}

untl_corpus* untl_corpus_open(const char* corpus_path) {
  try {
    if (!corpus_path) throw untl::ValidationError("corpus_open: path is required");
    // Label range is model-dependent; checked again at evaluation time.
    auto* corpus = new untl_corpus{untl::data::load_corpus(corpus_path, -1)};
    return corpus;
  } catch (const std::exception& e) {
    fail(e);
    return nullptr;
  }
}

void untl_corpus_close(untl_corpus* corpus) { delete corpus; }

size_t untl_corpus_size(const untl_corpus* corpus) {
  return corpus ? corpus->corpus.size() : 0;
}

untl_status untl_evaluate(const untl_model* model, const untl_corpus* corpus, int with_key,
                          char* report_json, size_t report_cap) {
  try {
    if (!model || !corpus) throw untl::ValidationError("evaluate: null handle");
    for (const auto& r : corpus->corpus.records)
      if (r.label >= model->checkpoint.config.classes)
        throw untl::ValidationError("evaluate: label " + std::to_string(r.label) +
                                    " out of range for " +
                                    std::to_string(model->checkpoint.config.classes) +
                                    " classes");
    const double acc =
        untl::training::evaluate_accuracy(model->checkpoint, corpus->corpus, with_key != 0);
    json report;
    report["format"] = 1;
    report["mode"] = untl::mode_name(model->checkpoint.config.mode);
    report["with_key"] = with_key != 0;
    report["domain"] = untl::data::domain_name(corpus->corpus.domain);
    report["examples"] = corpus->corpus.size();
    report["accuracy"] = acc;
    report["best_score"] = model->checkpoint.best_score;
    return copy_out(report.dump(), report_json, report_cap);
  } catch (const std::exception& e) {
    return fail(e);
  }
}

untl_status untl_export_embeddings(const untl_model* model, const untl_corpus* corpus,
                                   const char* out_path) {
  try {
    if (!model || !corpus) throw untl::ValidationError("export: null handle");
    if (!out_path) throw untl::ValidationError("export: out_path is required");
    const auto& ck = model->checkpoint;
    const auto tokenized =
        untl::data::tokenize_corpus(corpus->corpus, ck.vocab, ck.config.max_len);
    const untl::Matrix feats = untl::training::extract_features(ck.params, tokenized.sequences);

    std::ofstream out(out_path, std::ios::binary | std::ios::trunc);
    if (!out) throw untl::ValidationError("export: cannot write " + std::string(out_path));
    char num[32];
    for (int i = 0; i < feats.rows; ++i) {
      out << untl::data::domain_name(corpus->corpus.records[static_cast<size_t>(i)].domain)
          << ' ' << corpus->corpus.records[static_cast<size_t>(i)].label;
      for (int j = 0; j < feats.cols; ++j) {
        std::snprintf(num, sizeof(num), "%.17g", feats.at(i, j));
        out << ' ' << num;
      }
      out << '\n';
    }
    if (!out) throw untl::RuntimeAbort("export: write failed for " + std::string(out_path));
    return UNTL_OK;
  } catch (const std::exception& e) {
    return fail(e);
  }
}

}  // extern "C"
