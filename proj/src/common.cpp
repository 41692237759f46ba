#include "untl/common.hpp"

namespace untl {

const char* mode_name(Mode m) {
  switch (m) {
    case Mode::plain: return "plain";
    case Mode::untl: return "untl";
    case Mode::prompt: return "prompt";
    case Mode::adapter: return "adapter";
  }
  return "?";
}

Mode parse_mode(const std::string& name) {
  if (name == "plain") return Mode::plain;
  if (name == "untl") return Mode::untl;
  if (name == "prompt") return Mode::prompt;
  if (name == "adapter") return Mode::adapter;
  throw ValidationError("unknown mode '" + name + "' (expected plain|untl|prompt|adapter)");
}

}  // namespace untl
