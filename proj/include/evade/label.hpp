#pragma once

#include <array>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace evade {

// Declaration order is the canonical order used for tie-breaks: E < N < C.
enum class Label { kEntailment = 0, kNeutral = 1, kContradiction = 2 };

inline constexpr std::array<Label, 3> kAllLabels = {
    Label::kEntailment, Label::kNeutral, Label::kContradiction};

std::string_view to_string(Label label);

// Case-insensitive; also accepts the one-letter forms "e", "n", "c".
std::optional<Label> parse_label(std::string_view text);

inline std::size_t index_of(Label label) {
  return static_cast<std::size_t>(label);
}

using LabelSet = std::set<Label>;

// Probability vector over the three labels, indexed by index_of(label).
class LabelDistribution {
 public:
  static constexpr double kTolerance = 1e-9;

  LabelDistribution() = default;
  // Throws DataError unless entries are non-negative and sum to 1 within
  // kTolerance.
  explicit LabelDistribution(const std::array<double, 3>& p);

  double operator[](Label label) const { return p_[index_of(label)]; }
  const std::array<double, 3>& values() const { return p_; }

  // Highest-probability label, ties resolved E < N < C.
  Label argmax() const;

  friend bool operator==(const LabelDistribution&,
                         const LabelDistribution&) = default;

 private:
  std::array<double, 3> p_ = {1.0 / 3, 1.0 / 3, 1.0 / 3};
};

}  // namespace evade
