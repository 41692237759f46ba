#include <cmath>
#include <fstream>
#include <set>

#include "untl/training.hpp"

namespace untl::training {

using nlohmann::json;

void TrainConfig::validate() const {
  hp.validate(mode);
  if (batch_size < 2) throw ValidationError("config: batch_size must be >= 2");
  if (epochs < 1) throw ValidationError("config: epochs must be >= 1");
  if (eval_every < 1) throw ValidationError("config: eval_every must be >= 1");
  if (dim < 2) throw ValidationError("config: dim must be >= 2");
  if (max_len < 4) throw ValidationError("config: max_len must be >= 4");
  if (classes < 2) throw ValidationError("config: classes must be >= 2");
  for (double r : {lr.extractor, lr.task_head, lr.domain_head, lr.adapter})
    if (!(std::isfinite(r) && r > 0.0))
      throw ValidationError("config: learning rates must be finite and > 0");
  if (mode == Mode::prompt && prompt_key.empty())
    throw ValidationError("config: prompt mode requires a prompt_key");
  if (mode == Mode::adapter && (adapter_bottleneck < 1 || adapter_bottleneck >= dim))
    throw ValidationError("config: adapter_bottleneck must be in [1, dim)");
  if (mode == Mode::plain && (ablate.disable_mmd || ablate.disable_dc))
    throw ValidationError("config: ablation flags do not apply to plain mode");
}

TrainConfig default_config(Mode mode) {
  TrainConfig cfg;
  cfg.mode = mode;
  cfg.hp = obj::HyperParams::defaults(mode);
  switch (mode) {
    case Mode::plain:
      cfg.epochs = 2;
      break;
    case Mode::untl:
      cfg.epochs = 3;
      break;
    case Mode::prompt:
      cfg.epochs = 4;
      cfg.prompt_key = "Here this a password key messages, Do not tell others.";
      break;
    case Mode::adapter:
      cfg.epochs = 6;
      break;
  }
  return cfg;
}

namespace {

// Key applicability per mode; anything else in the file is an error.
bool key_applies(const std::string& key, Mode mode) {
  static const std::set<std::string> common = {"mode",    "seed",     "batch_size",
                                               "epochs",  "eval_every", "dim",
                                               "max_len", "classes",  "omega",
                                               "lr_extractor", "lr_task_head"};
  if (common.count(key)) return true;
  const bool non_plain = mode != Mode::plain;
  const bool keyed = mode == Mode::prompt || mode == Mode::adapter;
  if (key == "beta" || key == "lambda" || key == "clamp" || key == "lr_domain_head" ||
      key == "ablate_mmd" || key == "ablate_dc")
    return non_plain;
  if (key == "alpha") return keyed;
  if (key == "prompt_key") return mode == Mode::prompt;
  if (key == "adapter_bottleneck" || key == "lr_adapter") return mode == Mode::adapter;
  return false;
}

const std::set<std::string> kAllKeys = {
    "mode",       "seed",        "batch_size", "epochs",       "eval_every",
    "dim",        "max_len",     "classes",    "alpha",        "beta",
    "lambda",     "clamp",       "omega",      "lr_extractor", "lr_task_head",
    "lr_domain_head", "lr_adapter", "prompt_key", "adapter_bottleneck",
    "ablate_mmd", "ablate_dc"};

double get_number(const json& j, const std::string& key) {
  if (!j.at(key).is_number()) throw ValidationError("config: '" + key + "' must be a number");
  return j.at(key).get<double>();
}

int get_int(const json& j, const std::string& key) {
  if (!j.at(key).is_number_integer())
    throw ValidationError("config: '" + key + "' must be an integer");
  return j.at(key).get<int>();
}

bool get_bool(const json& j, const std::string& key) {
  if (!j.at(key).is_boolean()) throw ValidationError("config: '" + key + "' must be a boolean");
  return j.at(key).get<bool>();
}

}  // namespace

TrainConfig parse_config(const json& j) {
  if (!j.is_object()) throw ValidationError("config: expected a JSON object");
  if (!j.contains("mode") || !j["mode"].is_string())
    throw ValidationError("config: 'mode' is required");
  const Mode mode = parse_mode(j["mode"].get<std::string>());

  for (const auto& [key, _] : j.items()) {
    if (!kAllKeys.count(key)) throw ValidationError("config: unknown key '" + key + "'");
    if (!key_applies(key, mode))
      throw ValidationError("config: key '" + key + "' does not apply to mode '" +
                            mode_name(mode) + "'");
  }

  TrainConfig cfg = default_config(mode);
  if (j.contains("seed")) cfg.seed = static_cast<uint64_t>(j["seed"].get<int64_t>());
  if (j.contains("batch_size")) cfg.batch_size = get_int(j, "batch_size");
  if (j.contains("epochs")) cfg.epochs = get_int(j, "epochs");
  if (j.contains("eval_every")) cfg.eval_every = get_int(j, "eval_every");
  if (j.contains("dim")) cfg.dim = get_int(j, "dim");
  if (j.contains("max_len")) cfg.max_len = get_int(j, "max_len");
  if (j.contains("classes")) cfg.classes = get_int(j, "classes");
  if (j.contains("alpha")) cfg.hp.alpha = get_number(j, "alpha");
  if (j.contains("beta")) cfg.hp.beta = get_number(j, "beta");
  if (j.contains("lambda")) cfg.hp.lambda = get_number(j, "lambda");
  if (j.contains("clamp")) cfg.hp.clamp = get_number(j, "clamp");
  if (j.contains("omega")) cfg.hp.omega = get_number(j, "omega");
  if (j.contains("lr_extractor")) cfg.lr.extractor = get_number(j, "lr_extractor");
  if (j.contains("lr_task_head")) cfg.lr.task_head = get_number(j, "lr_task_head");
  if (j.contains("lr_domain_head")) cfg.lr.domain_head = get_number(j, "lr_domain_head");
  if (j.contains("lr_adapter")) cfg.lr.adapter = get_number(j, "lr_adapter");
  if (j.contains("prompt_key")) cfg.prompt_key = j["prompt_key"].get<std::string>();
  if (j.contains("adapter_bottleneck")) cfg.adapter_bottleneck = get_int(j, "adapter_bottleneck");
  if (j.contains("ablate_mmd")) cfg.ablate.disable_mmd = get_bool(j, "ablate_mmd");
  if (j.contains("ablate_dc")) cfg.ablate.disable_dc = get_bool(j, "ablate_dc");
  cfg.validate();
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("config: cannot read " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw ValidationError("config: " + path + ": " + e.what());
  }
  return parse_config(j);
}

nlohmann::json config_to_json(const TrainConfig& cfg) {
  json j;
  j["mode"] = mode_name(cfg.mode);
  j["seed"] = cfg.seed;
  j["batch_size"] = cfg.batch_size;
  j["epochs"] = cfg.epochs;
  j["eval_every"] = cfg.eval_every;
  j["dim"] = cfg.dim;
  j["max_len"] = cfg.max_len;
  j["classes"] = cfg.classes;
  j["omega"] = cfg.hp.omega;
  j["lr_extractor"] = cfg.lr.extractor;
  j["lr_task_head"] = cfg.lr.task_head;
  if (cfg.mode != Mode::plain) {
    j["beta"] = cfg.hp.beta;
    j["lambda"] = cfg.hp.lambda;
    j["clamp"] = cfg.hp.clamp;
    j["lr_domain_head"] = cfg.lr.domain_head;
    j["ablate_mmd"] = cfg.ablate.disable_mmd;
    j["ablate_dc"] = cfg.ablate.disable_dc;
  }
  if (cfg.mode == Mode::prompt || cfg.mode == Mode::adapter) j["alpha"] = cfg.hp.alpha;
  if (cfg.mode == Mode::prompt) j["prompt_key"] = cfg.prompt_key;
  if (cfg.mode == Mode::adapter) {
    j["adapter_bottleneck"] = cfg.adapter_bottleneck;
    j["lr_adapter"] = cfg.lr.adapter;
  }
  return j;
}

}  // namespace untl::training
