#include "evade/validator.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdlib>
#include <regex>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include "evade/error.hpp"
#include "evade/parallel.hpp"
#include "evade/text.hpp"
#include "json_util.hpp"

namespace evade::validator {

using detail::json;
using detail::ordered_json;

std::string_view to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::kOneExpl:
      return "one-expl";
    case Scenario::kOneLlm:
      return "one-llm";
    case Scenario::kAllLlm:
      return "all-llm";
  }
  return "one-expl";
}

Scenario parse_scenario(std::string_view text) {
  for (Scenario s : kAllScenarios) {
    if (text == to_string(s)) return s;
  }
  throw DataError(fmt::format(
      "unknown scenario '{}' (expected one-expl, one-llm, or all-llm)", text));
}

std::string_view to_string(VerdictStatus status) {
  switch (status) {
    case VerdictStatus::kValid:
      return "valid";
    case VerdictStatus::kErroneous:
      return "erroneous";
    case VerdictStatus::kUndetermined:
      return "undetermined";
  }
  return "undetermined";
}

const std::string_view kOneExplTemplate =
    "You are an expert linguistic annotator.\n\n"
    "We have collected annotations for an NLI instance together with reasons "
    "for the labels. Your task is to judge whether the reasons make sense for "
    "the label. Provide the probability (0.0-1.0) that the reason makes sense "
    "for the label. Give ONLY the probability, no other words or "
    "explanation.\n\n"
    "For example:\n"
    "Probability: <the probability between 0.0 and 1.0 that the reason makes "
    "sense for the label, without any extra commentary whatsoever; just the "
    "probability!>\n\n";

const std::string_view kBatchHeader =
    "You are an expert linguistic annotator.\n\n"
    "We have collected annotations for an NLI instance together with "
    "explanations for the labels. You will first be shown all explanations "
    "together so that you understand the overall context, and then your task "
    "is to judge whether each reason makes sense for the label. You must "
    "output a single JSON object that maps each explanation's index "
    "(1,2,3,...) to its probability in one time.\n\n"
    "Provide the probability (0.0 - 1.0) that each reason makes sense for the "
    "label. Give ONLY the probability, no other words or explanation.\n\n"
    "Output example: {\"1\": 0.9, \"2\": 0.8, ...}\n\n";

llm::ChatRequest build_validation_prompt(Scenario scenario,
                                         const Instance& instance,
                                         const std::vector<ContextItem>& items,
                                         const PromptOptions& options) {
  std::string content;
  if (scenario == Scenario::kOneExpl) {
    if (items.size() != 1) {
      throw DataError(fmt::format(
          "one-expl prompt takes exactly one explanation, got {}",
          items.size()));
    }
    content = std::string(kOneExplTemplate);
    content += fmt::format(
        "Context: {}\nStatement: {}\nReason for label {}: {}\nProbability:",
        instance.premise, instance.hypothesis, to_string(items[0].label),
        items[0].text);
  } else {
    if (items.empty()) {
      throw DataError(fmt::format(
          "{} prompt for instance '{}' has no explanations in context",
          to_string(scenario), instance.id));
    }
    content = std::string(kBatchHeader);
    content += fmt::format("Context: {}\nStatement: {}\n", instance.premise,
                           instance.hypothesis);
    for (std::size_t i = 0; i < items.size(); ++i) {
      content += fmt::format("Reason {} for label {}: {}\n", i + 1,
                             to_string(items[i].label), items[i].text);
    }
    content += "\nNow output the JSON object ONLY.";
  }

  llm::ChatRequest request;
  request.model_id = options.model_id;
  request.messages = {{"user", std::move(content)}};
  request.decoding = options.decoding;
  request.tag = options.tag;
  return request;
}

namespace {

const std::regex& number_regex() {
  static const std::regex re(
      R"([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)");
  return re;
}

double to_double(const std::string& token) {
  return std::strtod(token.c_str(), nullptr);
}

bool in_unit_interval(double v) {
  return std::isfinite(v) && v >= 0.0 && v <= 1.0;
}

std::optional<std::size_t> parse_index(std::string_view key) {
  const std::string trimmed = text::trim(key);
  std::size_t value = 0;
  const char* begin = trimmed.data();
  const char* end = begin + trimmed.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (ec != std::errc() || ptr != end || trimmed.empty()) return std::nullopt;
  return value;
}

}  // namespace

double parse_one_expl_score(std::string_view text) {
  const std::string owned(text);
  std::smatch match;
  if (!std::regex_search(owned, match, number_regex())) {
    throw ParseError(fmt::format("no probability in reply '{}'", text));
  }
  const double value = to_double(match.str());
  if (!in_unit_interval(value)) {
    throw ParseError(
        fmt::format("probability {} outside [0, 1] in reply '{}'", match.str(),
                    text));
  }
  return value;
}

BatchScores parse_batch_scores(std::string_view text, std::size_t n) {
  if (n == 0) throw DataError("parse_batch_scores needs n >= 1");
  const auto open = text.find('{');
  if (open == std::string_view::npos) {
    throw ParseError(fmt::format("no JSON object in reply '{}'", text));
  }

  BatchScores out;
  auto accept = [&](std::string_view key, double value) {
    const auto index = parse_index(key);
    if (!index || *index < 1 || *index > n) {
      out.extra.emplace_back(key);
      return;
    }
    if (out.scores.contains(*index) ||
        std::find(out.out_of_range.begin(), out.out_of_range.end(), *index) !=
            out.out_of_range.end()) {
      return;
    }
    if (!in_unit_interval(value)) {
      out.out_of_range.push_back(*index);
      return;
    }
    out.scores.emplace(*index, value);
  };

  bool parsed = false;
  const auto close = text.rfind('}');
  if (close != std::string_view::npos && close > open) {
    try {
      const json obj = json::parse(text.substr(open, close - open + 1));
      if (obj.is_object()) {
        parsed = true;
        for (const auto& [key, value] : obj.items()) {
          if (value.is_number()) {
            accept(key, value.get<double>());
          } else if (value.is_string() &&
                     std::regex_match(value.get<std::string>(),
                                      number_regex())) {
            accept(key, to_double(value.get<std::string>()));
          } else {
            out.extra.push_back(key);
          }
        }
      }
    } catch (const json::parse_error&) {
      parsed = false;
    }
  }

  if (!parsed) {
    // A value counts only once its delimiter arrived; "3": 0. at the cut-off
    // point may be the start of 0.75.
    static const std::regex pair(
        R"re("?\s*(\d+)\s*"?\s*:\s*"?([-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?)"?(?=\s*[,}\n]))re");
    const std::string rest(text.substr(open));
    for (auto it = std::sregex_iterator(rest.begin(), rest.end(), pair);
         it != std::sregex_iterator(); ++it) {
      accept((*it)[1].str(), to_double((*it)[2].str()));
    }
    if (out.scores.empty() && out.out_of_range.empty() && out.extra.empty()) {
      throw ParseError(
          fmt::format("no parseable JSON object in reply '{}'", text));
    }
    out.recovered = true;
  }

  for (std::size_t i = 1; i <= n; ++i) {
    if (!out.scores.contains(i)) out.missing.push_back(i);
  }
  std::sort(out.out_of_range.begin(), out.out_of_range.end());
  return out;
}

namespace {

ordered_json ref_to_json(const ExplanationRef& ref) {
  ordered_json obj;
  obj["instance_id"] = ref.instance_id;
  obj["label"] = std::string(to_string(ref.label));
  obj["source"] = ref.source.to_string();
  obj["ordinal"] = ref.ordinal;
  return obj;
}

ExplanationRef ref_from_json(const json& obj) {
  ExplanationRef ref;
  ref.instance_id = obj.at("instance_id").get<std::string>();
  const auto label = parse_label(obj.at("label").get<std::string>());
  if (!label) throw DataError("validation run has an unknown label");
  ref.label = *label;
  ref.source = Source::parse(obj.at("source").get<std::string>());
  ref.ordinal = obj.at("ordinal").get<std::size_t>();
  return ref;
}

}  // namespace

ordered_json ValidationRun::to_json() const {
  ordered_json obj;
  obj["validator_model"] = validator_model;
  obj["scenario"] = std::string(to_string(scenario));
  obj["targets"] = targets;
  obj["requests"] = requests;
  ordered_json s = ordered_json::array();
  for (const auto& [ref, score] : scores) {
    ordered_json item = ref_to_json(ref);
    item["score"] = score;
    s.push_back(std::move(item));
  }
  obj["scores"] = std::move(s);
  ordered_json m = ordered_json::array();
  for (const auto& ref : missing) m.push_back(ref_to_json(ref));
  obj["missing"] = std::move(m);
  return obj;
}

ValidationRun ValidationRun::from_json(const json& obj) {
  try {
    ValidationRun run;
    run.validator_model = obj.at("validator_model").get<std::string>();
    run.scenario = parse_scenario(obj.at("scenario").get<std::string>());
    run.targets = obj.value("targets", std::string("all"));
    run.requests = obj.value("requests", std::size_t{0});
    for (const auto& item : obj.at("scores")) {
      const double score = item.at("score").get<double>();
      if (!in_unit_interval(score)) {
        throw DataError(fmt::format("validation score {} outside [0, 1]",
                                    score));
      }
      run.scores.emplace(ref_from_json(item), score);
    }
    for (const auto& item : obj.at("missing")) {
      auto ref = ref_from_json(item);
      if (run.scores.contains(ref)) {
        throw DataError("validation run lists a ref as scored and missing");
      }
      run.missing.insert(std::move(ref));
    }
    return run;
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed validation run: {}", e.what()));
  }
}

void ValidationRun::save(const std::filesystem::path& path) const {
  detail::write_text_file(path, detail::dump_pretty(to_json()));
}

ValidationRun ValidationRun::load(const std::filesystem::path& path) {
  try {
    return from_json(detail::read_json_file(path));
  } catch (const DataError& e) {
    throw DataError(fmt::format("{}: {}", path.string(), e.what()));
  }
}

namespace {

// One request's worth of work: the context shown to the validator and which
// context positions are targets to be scored.
struct Job {
  std::size_t instance = 0;
  std::vector<ContextItem> context;
  std::vector<ExplanationRef> context_refs;
  std::vector<bool> is_target;
  std::string tag;
};

struct JobResult {
  std::vector<std::pair<ExplanationRef, double>> scores;
  std::vector<ExplanationRef> missing;
};

// Stable context order: source, then label E < N < C, then ordinal.
std::vector<std::size_t> context_order(const std::vector<ExplanationRef>& refs,
                                       const std::vector<std::size_t>& members) {
  std::vector<std::size_t> order = members;
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto key = [&](std::size_t i) {
      return std::tie(refs[i].source, refs[i].label, refs[i].ordinal);
    };
    return key(a) < key(b);
  });
  return order;
}

std::vector<Job> plan_jobs(const Corpus& corpus, const ValidateOptions& opt,
                           const SourceFilter& targets) {
  std::vector<Job> jobs;
  const std::string scenario(to_string(opt.scenario));
  const auto& instances = corpus.instances();
  for (std::size_t i = 0; i < instances.size(); ++i) {
    const Instance& inst = instances[i];
    const auto refs = explanation_refs(inst);

    std::vector<std::size_t> target_idx;
    for (std::size_t k = 0; k < inst.explanations.size(); ++k) {
      if (targets.matches(inst.explanations[k])) target_idx.push_back(k);
    }
    if (target_idx.empty()) continue;

    auto make_job = [&](const std::vector<std::size_t>& members,
                        std::string tag) {
      Job job;
      job.instance = i;
      job.tag = std::move(tag);
      for (std::size_t k : context_order(refs, members)) {
        const Explanation& e = inst.explanations[k];
        job.context.push_back({e.label, e.text});
        job.context_refs.push_back(refs[k]);
        job.is_target.push_back(targets.matches(e));
      }
      jobs.push_back(std::move(job));
    };

    switch (opt.scenario) {
      case Scenario::kOneExpl:
        for (std::size_t k : target_idx) {
          const auto& r = refs[k];
          make_job({k}, fmt::format("validate/{}/{}/{}/{}/{}/{}", scenario,
                                    opt.validator_model, inst.id,
                                    to_string(r.label), r.source.to_string(),
                                    r.ordinal));
        }
        break;
      case Scenario::kOneLlm: {
        std::set<Source> sources;
        for (std::size_t k : target_idx) sources.insert(refs[k].source);
        for (const auto& source : sources) {
          std::vector<std::size_t> members;
          for (std::size_t k = 0; k < refs.size(); ++k) {
            if (refs[k].source == source) members.push_back(k);
          }
          make_job(members,
                   fmt::format("validate/{}/{}/{}/{}", scenario,
                               opt.validator_model, inst.id,
                               source.to_string()));
        }
        break;
      }
      case Scenario::kAllLlm: {
        std::set<Source::Kind> kinds;
        for (std::size_t k : target_idx) kinds.insert(refs[k].source.kind);
        std::vector<std::size_t> members;
        for (std::size_t k = 0; k < refs.size(); ++k) {
          if (kinds.contains(refs[k].source.kind)) members.push_back(k);
        }
        make_job(members, fmt::format("validate/{}/{}/{}", scenario,
                                      opt.validator_model, inst.id));
        break;
      }
    }
  }
  return jobs;
}

llm::ChatRequest attempt_request(const Job& job, const Instance& inst,
                                 const ValidateOptions& opt, int attempt) {
  PromptOptions p;
  p.model_id = opt.validator_model;
  p.decoding = opt.decoding;
  p.tag = job.tag;
  if (attempt > 0) {
    // Vary the request so a retry is not answered from the cache.
    p.decoding.seed = p.decoding.seed.value_or(0) + attempt;
    p.tag += fmt::format("#retry{}", attempt);
  }
  return build_validation_prompt(opt.scenario, inst, job.context, p);
}

JobResult run_job(const Job& job, const Instance& inst,
                  const ValidateOptions& opt, llm::Gateway& gateway) {
  JobResult result;
  for (int attempt = 0; attempt <= opt.parse_retries; ++attempt) {
    const auto response =
        gateway.complete(attempt_request(job, inst, opt, attempt));
    try {
      if (opt.scenario == Scenario::kOneExpl) {
        const double score = parse_one_expl_score(response.text);
        result.scores.emplace_back(job.context_refs.front(), score);
      } else {
        const BatchScores batch =
            parse_batch_scores(response.text, job.context.size());
        for (std::size_t k = 0; k < job.context.size(); ++k) {
          if (!job.is_target[k]) continue;
          auto it = batch.scores.find(k + 1);
          if (it == batch.scores.end()) {
            result.missing.push_back(job.context_refs[k]);
          } else {
            result.scores.emplace_back(job.context_refs[k], it->second);
          }
        }
      }
      return result;
    } catch (const ParseError& e) {
      spdlog::debug("{}: attempt {} unparseable: {}", job.tag, attempt + 1,
                    e.what());
    }
  }
  spdlog::warn("{}: no parseable reply after {} attempts; marking missing",
               job.tag, opt.parse_retries + 1);
  for (std::size_t k = 0; k < job.context.size(); ++k) {
    if (job.is_target[k]) result.missing.push_back(job.context_refs[k]);
  }
  return result;
}

}  // namespace

ValidationResult validate_corpus(const Corpus& corpus,
                                 const ValidateOptions& options,
                                 llm::Gateway& gateway) {
  const SourceFilter targets =
      options.targets.value_or(SourceFilter::model(options.validator_model));
  const std::vector<Job> jobs = plan_jobs(corpus, options, targets);
  std::vector<JobResult> results(jobs.size());
  const llm::GatewayStats before = gateway.stats();

  parallel_for(jobs.size(), options.workers, [&](std::size_t j) {
    const Instance& inst = corpus.instances()[jobs[j].instance];
    results[j] = run_job(jobs[j], inst, options, gateway);
  });

  ValidationResult out;
  out.run.validator_model = options.validator_model;
  out.run.scenario = options.scenario;
  out.run.targets = targets.to_string();
  for (const auto& r : results) {
    for (const auto& [ref, score] : r.scores) out.run.scores[ref] = score;
    for (const auto& ref : r.missing) out.run.missing.insert(ref);
  }
  const llm::GatewayStats after = gateway.stats();
  out.run.requests = after.requests - before.requests;
  out.cache.requests = out.run.requests;
  out.cache.cache_hits = after.cache_hits - before.cache_hits;
  out.cache.backend_calls = after.backend_calls - before.backend_calls;

  const std::string key(to_string(options.scenario));
  std::vector<Instance> annotated = corpus.instances();
  for (auto& inst : annotated) {
    const auto refs = explanation_refs(inst);
    for (std::size_t k = 0; k < inst.explanations.size(); ++k) {
      auto it = out.run.scores.find(refs[k]);
      if (it != out.run.scores.end()) {
        inst.explanations[k].scores[key] = it->second;
      }
    }
  }
  out.corpus = Corpus(std::move(annotated));
  return out;
}

std::vector<ErrorVerdict> detect_errors(const ValidationRun& run, double tau,
                                        bool strict_gt) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw DataError(fmt::format("threshold {} outside [0, 1]", tau));
  }
  struct Acc {
    double sum = 0.0;
    double max = -1.0;
    std::size_t scored = 0;
    std::size_t missing = 0;
  };
  std::map<LabelKey, Acc> groups;
  for (const auto& [ref, score] : run.scores) {
    Acc& a = groups[{ref.instance_id, ref.label}];
    a.sum += score;
    a.max = std::max(a.max, score);
    ++a.scored;
  }
  for (const auto& ref : run.missing) {
    ++groups[{ref.instance_id, ref.label}].missing;
  }

  std::vector<ErrorVerdict> out;
  out.reserve(groups.size());
  for (const auto& [key, a] : groups) {
    ErrorVerdict v;
    v.instance_id = key.instance_id;
    v.label = key.label;
    v.scored = a.scored;
    v.missing = a.missing;
    v.threshold = tau;
    if (a.scored == 0) {
      v.status = VerdictStatus::kUndetermined;
    } else {
      v.mean_score = a.sum / static_cast<double>(a.scored);
      v.max_score = a.max;
      v.status = passes(a.max, tau, strict_gt) ? VerdictStatus::kValid
                                               : VerdictStatus::kErroneous;
    }
    out.push_back(std::move(v));
  }
  return out;
}

ordered_json verdicts_to_json(const std::vector<ErrorVerdict>& verdicts,
                              double tau, bool strict_gt) {
  ordered_json obj;
  obj["threshold"] = tau;
  obj["boundary"] = strict_gt ? "score > tau validates"
                              : "score >= tau validates";
  std::size_t erroneous = 0;
  std::size_t undetermined = 0;
  ordered_json list = ordered_json::array();
  for (const auto& v : verdicts) {
    if (v.erroneous()) ++erroneous;
    if (v.status == VerdictStatus::kUndetermined) ++undetermined;
    ordered_json item;
    item["instance_id"] = v.instance_id;
    item["label"] = std::string(to_string(v.label));
    item["status"] = std::string(to_string(v.status));
    item["mean_score"] = v.mean_score ? ordered_json(*v.mean_score)
                                      : ordered_json(nullptr);
    item["max_score"] =
        v.max_score ? ordered_json(*v.max_score) : ordered_json(nullptr);
    item["scored"] = v.scored;
    item["missing"] = v.missing;
    list.push_back(std::move(item));
  }
  obj["erroneous"] = erroneous;
  obj["undetermined"] = undetermined;
  obj["verdicts"] = std::move(list);
  return obj;
}

std::vector<ErrorVerdict> verdicts_from_json(const json& obj) {
  std::vector<ErrorVerdict> out;
  try {
    const double tau = obj.at("threshold").get<double>();
    for (const auto& item : obj.at("verdicts")) {
      ErrorVerdict v;
      v.instance_id = item.at("instance_id").get<std::string>();
      const auto label = parse_label(item.at("label").get<std::string>());
      if (!label) throw DataError("verdict has an unknown label");
      v.label = *label;
      const std::string status = item.at("status").get<std::string>();
      if (status == "valid") {
        v.status = VerdictStatus::kValid;
      } else if (status == "erroneous") {
        v.status = VerdictStatus::kErroneous;
      } else if (status == "undetermined") {
        v.status = VerdictStatus::kUndetermined;
      } else {
        throw DataError(fmt::format("unknown verdict status '{}'", status));
      }
      if (item.contains("mean_score") && !item["mean_score"].is_null()) {
        v.mean_score = item["mean_score"].get<double>();
      }
      if (item.contains("max_score") && !item["max_score"].is_null()) {
        v.max_score = item["max_score"].get<double>();
      }
      v.scored = item.value("scored", std::size_t{0});
      v.missing = item.value("missing", std::size_t{0});
      v.threshold = tau;
      out.push_back(std::move(v));
    }
  } catch (const json::exception& e) {
    throw DataError(fmt::format("malformed verdicts: {}", e.what()));
  }
  return out;
}

std::vector<LabelKey> error_ranking(const ValidationRun& run) {
  if (run.scores.empty() && run.missing.empty()) {
    throw DataError("error ranking needs a non-empty validation run");
  }
  std::vector<std::pair<double, LabelKey>> scored;
  for (const auto& v : detect_errors(run, 0.0)) {
    if (v.mean_score) scored.emplace_back(*v.mean_score, LabelKey{v.instance_id, v.label});
  }
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) {
                     if (a.first != b.first) return a.first < b.first;
                     return a.second < b.second;
                   });
  std::vector<LabelKey> out;
  out.reserve(scored.size());
  for (auto& [mean, key] : scored) out.push_back(std::move(key));
  return out;
}

std::map<std::string, LabelSet> validated_labels(const ValidationRun& run,
                                                 double tau, bool strict_gt) {
  if (!(tau >= 0.0 && tau <= 1.0)) {
    throw DataError(fmt::format("threshold {} outside [0, 1]", tau));
  }
  std::map<std::string, LabelSet> out;
  for (const auto& ref : run.missing) out[ref.instance_id];
  for (const auto& [ref, score] : run.scores) {
    LabelSet& labels = out[ref.instance_id];
    if (passes(score, tau, strict_gt)) labels.insert(ref.label);
  }
  return out;
}

}  // namespace evade::validator
