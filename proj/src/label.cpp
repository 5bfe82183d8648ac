#include "evade/label.hpp"

#include <cmath>

#include <fmt/format.h>

#include "evade/error.hpp"
#include "evade/text.hpp"

namespace evade {

std::string_view to_string(Label label) {
  switch (label) {
    case Label::kEntailment:
      return "entailment";
    case Label::kNeutral:
      return "neutral";
    case Label::kContradiction:
      return "contradiction";
  }
  return "unknown";
}

std::optional<Label> parse_label(std::string_view text) {
  const std::string lower = text::to_lower_ascii(text::trim(text));
  if (lower == "entailment" || lower == "e") return Label::kEntailment;
  if (lower == "neutral" || lower == "n") return Label::kNeutral;
  if (lower == "contradiction" || lower == "c") return Label::kContradiction;
  return std::nullopt;
}

LabelDistribution::LabelDistribution(const std::array<double, 3>& p) : p_(p) {
  double sum = 0.0;
  for (double v : p_) {
    if (!(v >= 0.0) || !std::isfinite(v)) {
      throw DataError(fmt::format(
          "label distribution has invalid entry {} (entries must be >= 0)",
          v));
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kTolerance) {
    throw DataError(
        fmt::format("label distribution sums to {:.12g}, expected 1", sum));
  }
}

Label LabelDistribution::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < p_.size(); ++i) {
    if (p_[i] > p_[best]) best = i;
  }
  return kAllLabels[best];
}

}  // namespace evade
