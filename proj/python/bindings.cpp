#include <array>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "evade/calibrator.hpp"
#include "evade/config.hpp"
#include "evade/corpus.hpp"
#include "evade/error.hpp"
#include "evade/filter.hpp"
#include "evade/generator.hpp"
#include "evade/metrics.hpp"
#include "evade/pipeline.hpp"
#include "evade/validator.hpp"

namespace py = pybind11;

namespace {

evade::LabelSet to_label_set(const std::vector<std::string>& names) {
  evade::LabelSet out;
  for (const auto& n : names) {
    auto label = evade::parse_label(n);
    if (!label) throw evade::DataError("unknown label '" + n + "'");
    out.insert(*label);
  }
  return out;
}

std::map<std::string, evade::LabelSet> to_label_map(
    const std::map<std::string, std::vector<std::string>>& in) {
  std::map<std::string, evade::LabelSet> out;
  for (const auto& [id, names] : in) out[id] = to_label_set(names);
  return out;
}

std::vector<evade::LabelKey> to_keys(
    const std::vector<std::pair<std::string, std::string>>& pairs) {
  std::vector<evade::LabelKey> out;
  for (const auto& [id, label] : pairs) {
    auto l = evade::parse_label(label);
    if (!l) throw evade::DataError("unknown label '" + label + "'");
    out.push_back({id, *l});
  }
  return out;
}

py::dict row_dict(const evade::calibrator::SweepRow& r) {
  py::dict d;
  d["tau"] = r.tau;
  d["kld"] = r.kld_mean;
  d["precision"] = r.precision;
  d["recall"] = r.recall;
  return d;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Explanation-based annotation validation core";

  static py::exception<evade::DataError> data_error(m, "DataError", PyExc_ValueError);
  static py::exception<evade::TransportError> transport_error(m, "TransportError",
                                                              PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const evade::DataError& e) {
      py::set_error(data_error, e.what());
    } catch (const evade::TransportError& e) {
      py::set_error(transport_error, e.what());
    }
  });

  m.def("kld",
        [](const std::array<double, 3>& ref, const std::array<double, 3>& cand,
           double eps) { return evade::metrics::kld(ref, cand, eps); },
        py::arg("reference"), py::arg("candidate"),
        py::arg("epsilon") = evade::metrics::kDefaultEpsilon,
        "KL(reference || candidate) with additive smoothing, in nats.");

  m.def("distribution_from_labels",
        [](const std::vector<std::string>& labels) -> std::optional<std::array<double, 3>> {
          auto d = evade::metrics::distribution_from_labels(to_label_set(labels));
          if (!d) return std::nullopt;
          return d->values();
        },
        py::arg("labels"));

  m.def("precision_recall",
        [](const std::map<std::string, std::vector<std::string>>& predicted,
           const std::map<std::string, std::vector<std::string>>& gold) {
          auto pr = evade::metrics::precision_recall(to_label_map(predicted),
                                                     to_label_map(gold));
          return py::make_tuple(pr.precision, pr.recall);
        },
        py::arg("predicted"), py::arg("gold"));

  m.def("average_precision",
        [](const std::vector<std::pair<std::string, std::string>>& ranking,
           const std::vector<std::pair<std::string, std::string>>& gold) {
          auto g = to_keys(gold);
          return evade::metrics::average_precision(
              to_keys(ranking), std::set<evade::LabelKey>(g.begin(), g.end()));
        },
        py::arg("ranking"), py::arg("gold"));

  m.def("lexical_similarity", &evade::metrics::lexical_similarity, py::arg("a"),
        py::arg("b"), py::arg("n") = 1);
  m.def("syntactic_similarity",
        [](const std::string& a, const std::string& b, std::size_t n) {
          return evade::metrics::syntactic_similarity(a, b, n,
                                                      evade::metrics::RuleBasedTagger());
        },
        py::arg("a"), py::arg("b"), py::arg("n") = 1);
  m.def("pos_tags",
        [](const std::string& text) { return evade::metrics::RuleBasedTagger().tag(text); },
        py::arg("text"));
  m.def("semantic_similarity",
        [](const std::vector<double>& u, const std::vector<double>& v) {
          auto s = evade::metrics::semantic_similarity(u, v);
          return py::make_tuple(s.cosine, s.euclidean);
        },
        py::arg("u"), py::arg("v"));

  m.def("weighted_f1",
        [](const std::map<std::string, std::array<double, 3>>& predicted,
           const std::map<std::string, std::array<double, 3>>& gold) {
          std::map<std::string, evade::LabelDistribution> p, g;
          for (const auto& [id, v] : predicted) p.emplace(id, evade::LabelDistribution(v));
          for (const auto& [id, v] : gold) g.emplace(id, evade::LabelDistribution(v));
          return evade::metrics::weighted_f1(p, g);
        },
        py::arg("predicted"), py::arg("gold"));

  m.def("parse_generation",
        [](const std::string& text) { return evade::generator::parse_generation(text); },
        py::arg("text"));
  m.def("classify_explanation",
        [](const std::string& text, const std::string& finish, bool last_item) {
          return std::string(evade::filter::to_string(evade::filter::classify_explanation(
              text, evade::llm::parse_finish_reason(finish), last_item)));
        },
        py::arg("text"), py::arg("finish_reason") = "stop", py::arg("last_item") = false);
  m.def("parse_one_expl_score",
        [](const std::string& text) { return evade::validator::parse_one_expl_score(text); },
        py::arg("text"));
  m.def("parse_batch_scores",
        [](const std::string& text, std::size_t n) {
          return evade::validator::parse_batch_scores(text, n).scores;
        },
        py::arg("text"), py::arg("n"));

  m.def("corpus_stats",
        [](const std::filesystem::path& path, const std::string& source) {
          auto s = evade::metrics::generation_stats(evade::load_corpus(path),
                                                    evade::SourceFilter::parse(source));
          py::dict d;
          d["instances"] = s.instances;
          d["explanations"] = s.explanations;
          d["mean_words"] = s.mean_words;
          d["labels_per_item"] = s.labels_per_item;
          d["explanations_per_label"] = s.explanations_per_label;
          return d;
        },
        py::arg("path"), py::arg("source") = "human");

  m.def("sweep",
        [](const std::filesystem::path& run, const std::filesystem::path& gold_corpus,
           const std::filesystem::path& reference, const std::string& gold_filter) {
          const auto rows = evade::calibrator::sweep(
              evade::validator::ValidationRun::load(run),
              evade::label_sets(evade::load_corpus(gold_corpus),
                                evade::SourceFilter::parse(gold_filter)),
              evade::load_reference(reference));
          py::list out;
          for (const auto& r : rows) out.append(row_dict(r));
          return out;
        },
        py::arg("run"), py::arg("gold_corpus"), py::arg("reference"),
        py::arg("gold_filter") = "human-valid");

  m.def("run_pipeline",
        [](const std::filesystem::path& config_path, const std::filesystem::path& workdir,
           std::optional<std::filesystem::path> mock) {
          evade::Config config = evade::Config::load(config_path);
          const auto layout = evade::pipeline::resolve(config, workdir);
          evade::pipeline::GatewayOptions opt;
          opt.mock = std::move(mock);
          auto gateway = evade::pipeline::make_gateway(config, layout, opt);
          py::gil_scoped_release release;
          return evade::pipeline::run_pipeline(config, layout, *gateway).dump();
        },
        py::arg("config"), py::arg("workdir"), py::arg("mock") = py::none(),
        "Runs every configured stage and returns the report as JSON text.");
}
