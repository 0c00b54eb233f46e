#include "lart/transformer.hpp"

namespace lart {

std::string_view to_string(TokenMode m) {
  switch (m) {
    case TokenMode::PoseOnly: return "pose";
    case TokenMode::AppearanceOnly: return "appearance";
    case TokenMode::Fused: return "fused";
  }
  return "?";
}

TokenMode token_mode_from_string(std::string_view s) {
  if (s == "pose") return TokenMode::PoseOnly;
  if (s == "appearance") return TokenMode::AppearanceOnly;
  if (s == "fused") return TokenMode::Fused;
  throw ConfigError("unknown token mode '" + std::string(s) + "' (expected pose, appearance or fused)");
}

std::string_view to_string(NormPosition n) { return n == NormPosition::Pre ? "pre" : "post"; }

NormPosition norm_position_from_string(std::string_view s) {
  if (s == "pre") return NormPosition::Pre;
  if (s == "post") return NormPosition::Post;
  throw ConfigError("unknown norm position '" + std::string(s) + "' (expected pre or post)");
}

}  // namespace lart
