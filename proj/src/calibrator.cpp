#include "evade/calibrator.hpp"

#include <cmath>

#include <fmt/format.h>

#include "evade/error.hpp"
#include "json_util.hpp"

namespace evade::calibrator {

namespace {

double harmonic_mean(double p, double r) {
  return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r);
}

std::string cell(const std::optional<double>& v) {
  return v ? fmt::format("{:.6f}", *v) : std::string();
}

nlohmann::ordered_json nullable(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

}  // namespace

std::vector<double> SweepOptions::default_grid() {
  std::vector<double> grid;
  for (int k = 1; k <= 9; ++k) grid.push_back(k / 10.0);
  return grid;
}

std::vector<SweepRow> sweep(const validator::ValidationRun& run,
                            const std::map<std::string, LabelSet>& gold,
                            const ReferenceMap& reference,
                            const SweepOptions& options) {
  if (run.targeted() == 0) throw DataError("sweep: empty validation run");
  if (options.grid.empty()) throw DataError("sweep: empty threshold grid");
  for (std::size_t i = 0; i < options.grid.size(); ++i) {
    const double tau = options.grid[i];
    if (tau < 0.0 || tau > 1.0) {
      throw DataError(fmt::format("sweep: threshold {} outside [0, 1]", tau));
    }
    if (i > 0 && !(tau > options.grid[i - 1])) {
      throw DataError("sweep: grid must be strictly increasing");
    }
  }

  std::vector<SweepRow> rows;
  rows.reserve(options.grid.size());
  for (double tau : options.grid) {
    const auto validated = validator::validated_labels(run, tau, options.strict_gt);
    std::map<std::string, LabelSet> gold_here;
    for (const auto& [id, labels] : validated) {
      auto it = gold.find(id);
      gold_here[id] = it == gold.end() ? LabelSet{} : it->second;
    }

    SweepRow row;
    row.tau = tau;
    double total = 0.0;
    for (const auto& [id, labels] : validated) {
      auto ref = reference.find(id);
      if (ref == reference.end()) {
        ++row.skipped_no_reference;
        continue;
      }
      const auto dist = metrics::distribution_from_labels(labels);
      if (!dist) {
        ++row.skipped_empty;
        continue;
      }
      total += metrics::kld(ref->second.distribution, *dist, options.epsilon);
      ++row.kld_instances;
    }
    if (row.kld_instances > 0) {
      row.kld_mean = total / static_cast<double>(row.kld_instances);
    }
    const auto pr = metrics::precision_recall(validated, gold_here);
    row.precision = pr.precision;
    row.recall = pr.recall;
    rows.push_back(row);
  }
  return rows;
}

Selection select_threshold(const std::vector<SweepRow>& rows,
                           const SelectionPolicy& policy) {
  if (rows.empty()) throw DataError("select_threshold: no rows");
  if (!(policy.kld_slack >= 0.0)) {
    throw DataError("select_threshold: kld_slack must be non-negative");
  }
  std::optional<double> min_kld;
  for (const auto& row : rows) {
    if (row.kld_mean && (!min_kld || *row.kld_mean < *min_kld)) {
      min_kld = row.kld_mean;
    }
  }
  if (!min_kld) throw DataError("degenerate sweep: no row has a KLD value");

  std::optional<Selection> best;
  std::size_t candidates = 0;
  for (const auto& row : rows) {
    if (!row.kld_mean || *row.kld_mean > *min_kld + policy.kld_slack) continue;
    if (!row.precision || !row.recall) continue;
    ++candidates;
    const double hm = harmonic_mean(*row.precision, *row.recall);
    if (!best || hm > best->harmonic_mean ||
        (hm == best->harmonic_mean && row.tau < best->tau)) {
      best = Selection{row.tau, *min_kld, hm, 0};
    }
  }
  if (!best) {
    throw DataError("degenerate sweep: every candidate row has null precision");
  }
  best->candidates = candidates;
  return *best;
}

nlohmann::ordered_json Selection::to_json(const SelectionPolicy& policy) const {
  nlohmann::ordered_json obj;
  obj["tau"] = tau;
  obj["policy"] = {
      {"rule", "max harmonic mean of P and R among rows with kld <= min + slack; "
               "ties to smaller tau"},
      {"kld_slack", policy.kld_slack}};
  obj["min_kld"] = min_kld;
  obj["harmonic_mean"] = harmonic_mean;
  obj["candidates"] = candidates;
  return obj;
}

std::string sweep_to_csv(const std::vector<SweepRow>& rows) {
  std::string out = "tau,kld,precision,recall\n";
  for (const auto& row : rows) {
    out += fmt::format("{:.2f},{},{},{}\n", row.tau, cell(row.kld_mean),
                       cell(row.precision), cell(row.recall));
  }
  return out;
}

nlohmann::ordered_json sweep_to_json(const std::vector<SweepRow>& rows) {
  auto arr = nlohmann::ordered_json::array();
  for (const auto& row : rows) {
    nlohmann::ordered_json obj;
    obj["tau"] = row.tau;
    obj["kld"] = nullable(row.kld_mean);
    obj["precision"] = nullable(row.precision);
    obj["recall"] = nullable(row.recall);
    obj["kld_instances"] = row.kld_instances;
    obj["skipped_no_reference"] = row.skipped_no_reference;
    obj["skipped_empty"] = row.skipped_empty;
    arr.push_back(std::move(obj));
  }
  return arr;
}

}  // namespace evade::calibrator
