#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include <nlohmann/json_fwd.hpp>

namespace evade::llm {

struct Message {
  std::string role;  // "system" or "user"
  std::string content;

  bool operator==(const Message&) const = default;
};

struct Decoding {
  double temperature = 0.0;
  int max_tokens = 1024;
  std::optional<std::int64_t> seed;

  bool operator==(const Decoding&) const = default;
};

struct ChatRequest {
  std::string model_id;
  std::vector<Message> messages;
  Decoding decoding;
  // Human-readable logical key used to address scripted mock responses.
  // Not part of the cache key.
  std::string tag;

  // Throws DataError on an empty message list or an unknown role.
  void validate() const;
};

enum class FinishReason { kStop, kLength, kOther };

std::string_view to_string(FinishReason reason);
FinishReason parse_finish_reason(std::string_view text);

struct Usage {
  std::int64_t prompt_tokens = 0;
  std::int64_t completion_tokens = 0;
};

struct ChatResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::kStop;
  Usage usage;
  bool cached = false;
};

using Vector = std::vector<double>;

// Canonical JSON of the hashed request fields (model, messages, decoding).
nlohmann::json canonical_request(const ChatRequest& request);

// Hex SHA-256 of the canonical request.
std::string cache_key(const ChatRequest& request);

// Hex SHA-256 of (provider, text).
std::string embedding_key(std::string_view provider, std::string_view text);

std::string sha256_hex(std::string_view data);

// text -> vector lookup loaded from JSONL {"text": str, "vector": [..]}.
class EmbeddingTable {
 public:
  EmbeddingTable() = default;
  static EmbeddingTable load(const std::filesystem::path& path);

  void add(std::string text, Vector vector);
  const Vector* find(std::string_view text) const;
  std::size_t size() const { return vectors_.size(); }
  bool empty() const { return vectors_.empty(); }

 private:
  std::map<std::string, Vector, std::less<>> vectors_;
};

class Backend {
 public:
  virtual ~Backend() = default;
  virtual ChatResponse complete(const ChatRequest& request) = 0;
  virtual std::vector<Vector> embed(const std::vector<std::string>& texts) = 0;
  // Identifies the embedding model for cache keys.
  virtual std::string embedding_provider() const = 0;
};

// Replays scripted responses; never invents output.
class MockBackend : public Backend {
 public:
  struct Scripted {
    std::string text;
    FinishReason finish_reason = FinishReason::kStop;
  };

  MockBackend() = default;
  // JSONL lines {"key", "text", "finish_reason"?}; lines of the form
  // {"embed": text, "vector": [..]} script embeddings.
  static std::unique_ptr<MockBackend> from_file(
      const std::filesystem::path& path);

  // `key` is either a request digest or a request tag.
  void script(std::string key, std::string text,
              FinishReason finish_reason = FinishReason::kStop);
  void script_vector(std::string text, Vector vector);

  ChatResponse complete(const ChatRequest& request) override;
  std::vector<Vector> embed(const std::vector<std::string>& texts) override;
  std::string embedding_provider() const override { return "mock"; }

  std::size_t calls() const { return calls_.load(); }

 private:
  std::unordered_map<std::string, Scripted> responses_;
  EmbeddingTable vectors_;
  std::atomic<std::size_t> calls_{0};
};

struct HttpConfig {
  std::string base_url = "https://api.openai.com/v1";
  std::string api_key;
  std::string embedding_model = "text-embedding-3-small";
  int retries = 3;
  std::chrono::milliseconds initial_backoff{500};
  std::chrono::seconds timeout{120};
};

// OpenAI-compatible /chat/completions and /embeddings client.
class HttpBackend : public Backend {
 public:
  // Throws TransportError when no API key is configured.
  explicit HttpBackend(HttpConfig config);

  ChatResponse complete(const ChatRequest& request) override;
  std::vector<Vector> embed(const std::vector<std::string>& texts) override;
  std::string embedding_provider() const override {
    return config_.embedding_model;
  }

 private:
  std::string post(const std::string& endpoint, const std::string& body);

  HttpConfig config_;
  std::string origin_;       // scheme://host[:port]
  std::string path_prefix_;  // e.g. "/v1"
};

// Append-only JSONL cache keyed by content digest. One writer per file.
class ResponseCache {
 public:
  explicit ResponseCache(std::filesystem::path path);

  std::optional<ChatResponse> find(const std::string& key) const;
  void store(const std::string& key, const ChatRequest& request,
             const ChatResponse& response);

  std::optional<Vector> find_vector(const std::string& key) const;
  void store_vector(const std::string& key, std::string_view provider,
                    std::string_view text, const Vector& vector);

  std::size_t size() const;
  const std::filesystem::path& path() const { return path_; }

 private:
  void append(const std::string& line);

  std::filesystem::path path_;
  mutable std::mutex mutex_;
  std::unordered_map<std::string, ChatResponse> responses_;
  std::unordered_map<std::string, Vector> vectors_;
};

struct GatewayStats {
  std::size_t requests = 0;
  std::size_t cache_hits = 0;
  std::size_t backend_calls = 0;

  double hit_rate() const {
    return requests == 0 ? 0.0
                         : static_cast<double>(cache_hits) /
                               static_cast<double>(requests);
  }
};

// Cache-first access to a backend. Safe to call from many threads.
class Gateway {
 public:
  explicit Gateway(std::unique_ptr<Backend> backend,
                   std::optional<std::filesystem::path> cache_file = {});

  ChatResponse complete(const ChatRequest& request);

  // One vector per input, order preserved. Uses the precomputed table when
  // one is set, the backend otherwise.
  std::vector<Vector> embed(const std::vector<std::string>& texts);

  void set_embedding_table(EmbeddingTable table) {
    table_ = std::move(table);
  }

  GatewayStats stats() const;
  void reset_stats();
  Backend& backend() { return *backend_; }

 private:
  std::unique_ptr<Backend> backend_;
  std::unique_ptr<ResponseCache> cache_;
  std::optional<EmbeddingTable> table_;
  std::atomic<std::size_t> requests_{0};
  std::atomic<std::size_t> hits_{0};
  std::atomic<std::size_t> backend_calls_{0};
};

}  // namespace evade::llm
