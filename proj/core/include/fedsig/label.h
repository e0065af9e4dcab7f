#pragma once

#include <string_view>

namespace fedsig {

// Class order of the verifier's logits: index 0 is Forged, 1 is Genuine.
enum class Label : int { kForged = 0, kGenuine = 1 };

constexpr int class_index(Label label) { return static_cast<int>(label); }

constexpr std::string_view label_name(Label label) {
  return label == Label::kGenuine ? "genuine" : "forged";
}

}  // namespace fedsig
