#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "evade/corpus.hpp"
#include "evade/metrics.hpp"
#include "evade/validator.hpp"

namespace evade::calibrator {

struct SweepRow {
  double tau = 0.0;
  // Mean KLD over instances with a reference and a non-empty validated set;
  // null when there are none.
  std::optional<double> kld_mean;
  std::optional<double> precision;  // null when nothing validated
  std::optional<double> recall;
  std::size_t kld_instances = 0;
  std::size_t skipped_no_reference = 0;
  std::size_t skipped_empty = 0;
};

struct SweepOptions {
  std::vector<double> grid = default_grid();
  double epsilon = metrics::kDefaultEpsilon;
  bool strict_gt = false;

  static std::vector<double> default_grid();  // 0.1, 0.2, ..., 0.9
};

// One row per grid point, ascending. Gold sets are restricted to the run's
// instances. Throws DataError on an empty run or a grid that is not strictly
// increasing inside [0, 1].
std::vector<SweepRow> sweep(const validator::ValidationRun& run,
                            const std::map<std::string, LabelSet>& gold,
                            const ReferenceMap& reference,
                            const SweepOptions& options = {});

struct SelectionPolicy {
  double kld_slack = 0.02;
};

struct Selection {
  double tau = 0.0;
  double min_kld = 0.0;
  double harmonic_mean = 0.0;
  std::size_t candidates = 0;

  nlohmann::ordered_json to_json(const SelectionPolicy& policy) const;
};

// Among rows with kld_mean <= min + slack and non-null P and R, the row with
// the highest harmonic mean of P and R; ties go to the smaller tau. Throws
// DataError("degenerate sweep") when no candidate has P and R.
Selection select_threshold(const std::vector<SweepRow>& rows,
                           const SelectionPolicy& policy = {});

// Columns tau,kld,precision,recall; null cells are left empty.
std::string sweep_to_csv(const std::vector<SweepRow>& rows);
nlohmann::ordered_json sweep_to_json(const std::vector<SweepRow>& rows);

}  // namespace evade::calibrator
