#include "evade/gateway.hpp"

#include <ctime>
#include <fstream>
#include <thread>

#include <fmt/format.h>
#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "evade/error.hpp"
#include "json_util.hpp"

namespace evade::llm {

using detail::json;
using detail::ordered_json;

void ChatRequest::validate() const {
  if (messages.empty()) {
    throw DataError("chat request needs at least one message");
  }
  for (const auto& m : messages) {
    if (m.role != "system" && m.role != "user") {
      throw DataError(fmt::format("unsupported message role '{}'", m.role));
    }
  }
  if (decoding.temperature < 0.0) {
    throw DataError("temperature must be >= 0");
  }
  if (decoding.max_tokens <= 0) {
    throw DataError("max_tokens must be positive");
  }
}

std::string_view to_string(FinishReason reason) {
  switch (reason) {
    case FinishReason::kStop:
      return "stop";
    case FinishReason::kLength:
      return "length";
    case FinishReason::kOther:
      return "other";
  }
  return "other";
}

FinishReason parse_finish_reason(std::string_view text) {
  if (text == "stop" || text.empty()) return FinishReason::kStop;
  if (text == "length") return FinishReason::kLength;
  return FinishReason::kOther;
}

json canonical_request(const ChatRequest& request) {
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  json decoding = {{"temperature", request.decoding.temperature},
                   {"max_tokens", request.decoding.max_tokens}};
  if (request.decoding.seed) decoding["seed"] = *request.decoding.seed;
  return {{"model", request.model_id},
          {"messages", std::move(messages)},
          {"decoding", std::move(decoding)}};
}

std::string sha256_hex(std::string_view data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int length = 0;
  if (EVP_Digest(data.data(), data.size(), digest, &length, EVP_sha256(),
                 nullptr) != 1) {
    throw std::runtime_error("SHA-256 digest failed");
  }
  std::string hex;
  hex.reserve(length * 2);
  for (unsigned int i = 0; i < length; ++i) {
    hex += fmt::format("{:02x}", digest[i]);
  }
  return hex;
}

std::string cache_key(const ChatRequest& request) {
  // json objects serialize with sorted keys, so the dump is canonical.
  return sha256_hex(canonical_request(request).dump());
}

std::string embedding_key(std::string_view provider, std::string_view text) {
  std::string data = json({{"provider", provider}, {"text", text}}).dump();
  return sha256_hex(data);
}

namespace {

ChatResponse response_from_json(const json& obj) {
  ChatResponse r;
  r.text = obj.value("text", std::string());
  r.finish_reason = parse_finish_reason(obj.value("finish_reason", "stop"));
  if (auto it = obj.find("usage"); it != obj.end() && it->is_object()) {
    r.usage.prompt_tokens = it->value("prompt_tokens", std::int64_t{0});
    r.usage.completion_tokens = it->value("completion_tokens", std::int64_t{0});
  }
  return r;
}

ordered_json response_to_json(const ChatResponse& r) {
  ordered_json obj;
  obj["text"] = r.text;
  obj["finish_reason"] = std::string(to_string(r.finish_reason));
  obj["usage"] = {{"prompt_tokens", r.usage.prompt_tokens},
                  {"completion_tokens", r.usage.completion_tokens}};
  return obj;
}

Vector vector_from_json(const json& v, std::string_view context) {
  if (!v.is_array()) {
    throw DataError(fmt::format("{}: vector must be an array", context));
  }
  Vector out;
  out.reserve(v.size());
  for (const auto& x : v) {
    if (!x.is_number()) {
      throw DataError(fmt::format("{}: vector entries must be numbers",
                                  context));
    }
    out.push_back(x.get<double>());
  }
  return out;
}

std::string iso8601_now() {
  const std::time_t now = std::time(nullptr);
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

void check_dimensions(const std::vector<Vector>& vectors) {
  for (const auto& v : vectors) {
    if (v.size() != vectors.front().size()) {
      throw DataError(fmt::format(
          "embedding dimension mismatch within a batch ({} vs {})", v.size(),
          vectors.front().size()));
    }
  }
}

}  // namespace

EmbeddingTable EmbeddingTable::load(const std::filesystem::path& path) {
  EmbeddingTable table;
  auto in = detail::open_input(path);
  const std::string name = path.string();
  detail::for_each_jsonl(
      in, name, [&](const json& obj, const detail::Where& where) {
        const std::string text = detail::require_string(obj, "text", where);
        table.add(text, vector_from_json(detail::require(obj, "vector", where),
                                         where.str()));
      });
  return table;
}

void EmbeddingTable::add(std::string text, Vector vector) {
  vectors_.insert_or_assign(std::move(text), std::move(vector));
}

const Vector* EmbeddingTable::find(std::string_view text) const {
  auto it = vectors_.find(text);
  return it == vectors_.end() ? nullptr : &it->second;
}

std::unique_ptr<MockBackend> MockBackend::from_file(
    const std::filesystem::path& path) {
  auto mock = std::make_unique<MockBackend>();
  auto in = detail::open_input(path);
  const std::string name = path.string();
  detail::for_each_jsonl(
      in, name, [&](const json& obj, const detail::Where& where) {
        if (obj.contains("embed")) {
          mock->script_vector(
              detail::require_string(obj, "embed", where),
              vector_from_json(detail::require(obj, "vector", where),
                               where.str()));
          return;
        }
        std::string finish = "stop";
        if (auto it = obj.find("finish_reason");
            it != obj.end() && it->is_string()) {
          finish = it->get<std::string>();
        }
        mock->script(detail::require_string(obj, "key", where),
                     detail::require_string(obj, "text", where),
                     parse_finish_reason(finish));
      });
  return mock;
}

void MockBackend::script(std::string key, std::string text,
                         FinishReason finish_reason) {
  responses_.insert_or_assign(std::move(key),
                              Scripted{std::move(text), finish_reason});
}

void MockBackend::script_vector(std::string text, Vector vector) {
  vectors_.add(std::move(text), std::move(vector));
}

ChatResponse MockBackend::complete(const ChatRequest& request) {
  ++calls_;
  const std::string digest = cache_key(request);
  auto it = responses_.find(digest);
  if (it == responses_.end() && !request.tag.empty()) {
    it = responses_.find(request.tag);
  }
  if (it == responses_.end()) {
    throw TransportError(fmt::format(
        "unscripted request (tag '{}', key {})", request.tag, digest));
  }
  ChatResponse r;
  r.text = it->second.text;
  r.finish_reason = it->second.finish_reason;
  return r;
}

std::vector<Vector> MockBackend::embed(const std::vector<std::string>& texts) {
  ++calls_;
  std::vector<Vector> out;
  out.reserve(texts.size());
  for (const auto& t : texts) {
    const Vector* v = vectors_.find(t);
    if (v == nullptr) {
      throw TransportError(fmt::format("unscripted embedding text '{}'", t));
    }
    out.push_back(*v);
  }
  return out;
}

HttpBackend::HttpBackend(HttpConfig config) : config_(std::move(config)) {
  if (config_.api_key.empty()) {
    throw TransportError(
        "no API key for the live backend: set EVADE_API_KEY or run with "
        "--mock");
  }
  const auto scheme_end = config_.base_url.find("://");
  const auto host_start =
      scheme_end == std::string::npos ? 0 : scheme_end + 3;
  const auto path_start = config_.base_url.find('/', host_start);
  origin_ = config_.base_url.substr(0, path_start);
  if (path_start != std::string::npos) {
    path_prefix_ = config_.base_url.substr(path_start);
    while (!path_prefix_.empty() && path_prefix_.back() == '/') {
      path_prefix_.pop_back();
    }
  }
}

std::string HttpBackend::post(const std::string& endpoint,
                              const std::string& body) {
  httplib::Client client(origin_);
  client.set_connection_timeout(config_.timeout);
  client.set_read_timeout(config_.timeout);
  client.set_bearer_token_auth(config_.api_key);

  const std::string path = path_prefix_ + endpoint;
  auto backoff = config_.initial_backoff;
  std::string last_error;
  for (int attempt = 0; attempt <= config_.retries; ++attempt) {
    if (attempt > 0) {
      spdlog::warn("{}: retry {}/{} after {}", path, attempt, config_.retries,
                   last_error);
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    auto result = client.Post(path, body, "application/json");
    if (!result) {
      last_error = httplib::to_string(result.error());
      continue;
    }
    if (result->status == 429 || result->status >= 500) {
      last_error = fmt::format("HTTP {}", result->status);
      continue;
    }
    if (result->status != 200) {
      throw TransportError(fmt::format("{}: HTTP {}: {}", path, result->status,
                                       result->body.substr(0, 300)));
    }
    return result->body;
  }
  throw TransportError(fmt::format("{}: giving up after {} retries: {}", path,
                                   config_.retries, last_error));
}

ChatResponse HttpBackend::complete(const ChatRequest& request) {
  json body = {{"model", request.model_id},
               {"temperature", request.decoding.temperature},
               {"max_tokens", request.decoding.max_tokens}};
  json messages = json::array();
  for (const auto& m : request.messages) {
    messages.push_back({{"role", m.role}, {"content", m.content}});
  }
  body["messages"] = std::move(messages);
  if (request.decoding.seed) body["seed"] = *request.decoding.seed;

  const std::string raw = post("/chat/completions", body.dump());
  json reply;
  try {
    reply = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("chat completion reply is not JSON: {}",
                                 e.what()));
  }
  const auto choices = reply.find("choices");
  if (choices == reply.end() || !choices->is_array() || choices->empty()) {
    throw ParseError("chat completion reply has no choices");
  }
  const json& choice = choices->front();
  ChatResponse r;
  if (auto msg = choice.find("message"); msg != choice.end()) {
    if (auto c = msg->find("content"); c != msg->end() && c->is_string()) {
      r.text = c->get<std::string>();
    }
  }
  if (auto f = choice.find("finish_reason"); f != choice.end() && f->is_string()) {
    r.finish_reason = parse_finish_reason(f->get<std::string>());
  }
  if (auto u = reply.find("usage"); u != reply.end() && u->is_object()) {
    r.usage.prompt_tokens = u->value("prompt_tokens", std::int64_t{0});
    r.usage.completion_tokens = u->value("completion_tokens", std::int64_t{0});
  }
  return r;
}

std::vector<Vector> HttpBackend::embed(const std::vector<std::string>& texts) {
  if (texts.empty()) return {};
  const json body = {{"model", config_.embedding_model}, {"input", texts}};
  const std::string raw = post("/embeddings", body.dump());
  json reply;
  try {
    reply = json::parse(raw);
  } catch (const json::parse_error& e) {
    throw ParseError(fmt::format("embedding reply is not JSON: {}", e.what()));
  }
  const auto data = reply.find("data");
  if (data == reply.end() || !data->is_array() ||
      data->size() != texts.size()) {
    throw ParseError("embedding reply does not carry one vector per input");
  }
  std::vector<Vector> out(texts.size());
  for (std::size_t i = 0; i < data->size(); ++i) {
    const json& item = (*data)[i];
    const std::size_t index = item.value("index", i);
    if (index >= out.size()) throw ParseError("embedding index out of range");
    out[index] = vector_from_json(item.at("embedding"), "embedding reply");
  }
  return out;
}

ResponseCache::ResponseCache(std::filesystem::path path)
    : path_(std::move(path)) {
  if (path_.has_parent_path()) {
    std::filesystem::create_directories(path_.parent_path());
  }
  std::ifstream in(path_, std::ios::binary);
  if (!in) return;
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    if (line.empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error&) {
      // A partial trailing line from an interrupted writer.
      spdlog::warn("{}:{}: skipping unreadable cache line", path_.string(),
                   number);
      continue;
    }
    const std::string key = obj.value("key", std::string());
    if (key.empty() || !obj.contains("response")) continue;
    const json& response = obj["response"];
    if (response.contains("vector")) {
      vectors_[key] = vector_from_json(response["vector"], path_.string());
    } else {
      responses_[key] = response_from_json(response);
    }
  }
}

std::optional<ChatResponse> ResponseCache::find(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = responses_.find(key);
  if (it == responses_.end()) return std::nullopt;
  return it->second;
}

std::optional<Vector> ResponseCache::find_vector(const std::string& key) const {
  std::lock_guard lock(mutex_);
  auto it = vectors_.find(key);
  if (it == vectors_.end()) return std::nullopt;
  return it->second;
}

void ResponseCache::append(const std::string& line) {
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) {
    throw DataError(fmt::format("cannot append to cache '{}'", path_.string()));
  }
  out << line;
  out.flush();
}

void ResponseCache::store(const std::string& key, const ChatRequest& request,
                          const ChatResponse& response) {
  ordered_json obj;
  obj["key"] = key;
  obj["request"] = canonical_request(request);
  obj["response"] = response_to_json(response);
  obj["ts"] = iso8601_now();
  const std::string line = detail::dump_line(obj);
  std::lock_guard lock(mutex_);
  if (responses_.contains(key)) return;
  append(line);
  responses_[key] = response;
}

void ResponseCache::store_vector(const std::string& key,
                                 std::string_view provider,
                                 std::string_view text, const Vector& vector) {
  ordered_json obj;
  obj["key"] = key;
  obj["request"] = {{"provider", provider}, {"text", text}};
  obj["response"] = {{"vector", vector}};
  obj["ts"] = iso8601_now();
  const std::string line = detail::dump_line(obj);
  std::lock_guard lock(mutex_);
  if (vectors_.contains(key)) return;
  append(line);
  vectors_[key] = vector;
}

std::size_t ResponseCache::size() const {
  std::lock_guard lock(mutex_);
  return responses_.size() + vectors_.size();
}

Gateway::Gateway(std::unique_ptr<Backend> backend,
                 std::optional<std::filesystem::path> cache_file)
    : backend_(std::move(backend)) {
  if (cache_file) cache_ = std::make_unique<ResponseCache>(*cache_file);
}

ChatResponse Gateway::complete(const ChatRequest& request) {
  request.validate();
  ++requests_;
  const std::string key = cache_key(request);
  if (cache_) {
    if (auto hit = cache_->find(key)) {
      ++hits_;
      hit->cached = true;
      return *hit;
    }
  }
  ++backend_calls_;
  ChatResponse response = backend_->complete(request);
  response.cached = false;
  if (cache_) cache_->store(key, request, response);
  return response;
}

std::vector<Vector> Gateway::embed(const std::vector<std::string>& texts) {
  std::vector<Vector> out(texts.size());
  if (texts.empty()) return out;

  if (table_) {
    for (std::size_t i = 0; i < texts.size(); ++i) {
      const Vector* v = table_->find(texts[i]);
      if (v == nullptr) {
        throw DataError(
            fmt::format("no precomputed vector for text '{}'", texts[i]));
      }
      out[i] = *v;
    }
    check_dimensions(out);
    return out;
  }

  const std::string provider = backend_->embedding_provider();
  // Unique uncached texts, in first-seen order.
  std::vector<std::string> pending;
  std::map<std::string, std::vector<std::size_t>> positions;
  for (std::size_t i = 0; i < texts.size(); ++i) {
    ++requests_;
    std::optional<Vector> hit;
    if (cache_) hit = cache_->find_vector(embedding_key(provider, texts[i]));
    if (hit) {
      ++hits_;
      out[i] = std::move(*hit);
      continue;
    }
    auto& slots = positions[texts[i]];
    if (slots.empty()) pending.push_back(texts[i]);
    slots.push_back(i);
  }
  if (!pending.empty()) {
    ++backend_calls_;
    std::vector<Vector> fresh = backend_->embed(pending);
    if (fresh.size() != pending.size()) {
      throw DataError("embedding backend returned the wrong number of vectors");
    }
    for (std::size_t k = 0; k < pending.size(); ++k) {
      if (cache_) {
        cache_->store_vector(embedding_key(provider, pending[k]), provider,
                             pending[k], fresh[k]);
      }
      for (std::size_t pos : positions[pending[k]]) out[pos] = fresh[k];
    }
  }
  check_dimensions(out);
  return out;
}

GatewayStats Gateway::stats() const {
  return {requests_.load(), hits_.load(), backend_calls_.load()};
}

void Gateway::reset_stats() {
  requests_ = 0;
  hits_ = 0;
  backend_calls_ = 0;
}

}  // namespace evade::llm
