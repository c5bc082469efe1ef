#include "amx/regularizer.hpp"

namespace amx {

MixupMethod parse_mixup_method(const std::string& s) {
  if (s == "none" || s == "erm") return MixupMethod::none;
  if (s == "input" || s == "input_mixup") return MixupMethod::input_mixup;
  if (s == "manifold" || s == "manifold_mixup") return MixupMethod::manifold_mixup;
  if (s == "anchored" || s == "anchored_mixup" || s == "regression_mixup")
    return MixupMethod::anchored;
  throw ValueError("unknown mixup method '" + s +
                   "' (expected none|input|manifold|anchored)");
}

std::string to_string(MixupMethod m) {
  switch (m) {
    case MixupMethod::none: return "none";
    case MixupMethod::input_mixup: return "input";
    case MixupMethod::manifold_mixup: return "manifold";
    case MixupMethod::anchored: return "anchored";
  }
  return "?";
}

}  // namespace amx
