#pragma once

#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace lexeval {

struct DecodingParams {
  double temperature = 0.0;
  int max_tokens = 1024;
  std::optional<long> seed;

  bool operator==(const DecodingParams&) const = default;
};

enum class Role { System, User, Assistant };
std::string_view to_string(Role role);
Role role_from_string(std::string_view name);

struct Message {
  Role role = Role::User;
  std::string text;

  bool operator==(const Message&) const = default;
};

struct CompletionRequest {
  std::string model_id;
  std::vector<Message> messages;
  DecodingParams decoding;
  std::string request_tag;  // correlation id; not part of the digest
};

enum class FinishReason { Stop, Length, Filter, Error };
std::string_view to_string(FinishReason reason);
FinishReason finish_reason_from_string(std::string_view name);

struct CompletionResponse {
  std::string text;
  FinishReason finish_reason = FinishReason::Stop;
  double latency_ms = 0.0;
  std::string raw;  // provider payload, verbatim
};

// Content address of a request: any byte change in backend identity, model,
// decoding parameters or messages changes the digest.
std::string request_digest(std::string_view backend_id, const CompletionRequest& request);

class Backend {
 public:
  virtual ~Backend() = default;
  virtual std::string id() const = 0;
  virtual CompletionResponse complete(const CompletionRequest& request) = 0;
};

struct HttpBackendOptions {
  std::string base_url;  // e.g. "http://localhost:8000/v1"
  std::string api_key_env = "LEXEVAL_API_KEY";
  int max_retries = 3;
  int max_in_flight = 4;
  double initial_backoff_ms = 250.0;
};

// OpenAI-compatible chat-completions client with bounded retries, exponential
// backoff and an in-flight cap. Safe for concurrent use.
class HttpBackend : public Backend {
 public:
  explicit HttpBackend(HttpBackendOptions options);
  std::string id() const override;
  CompletionResponse complete(const CompletionRequest& request) override;

 private:
  HttpBackendOptions options_;
  std::mutex slots_mutex_;
  std::condition_variable_any slots_free_;
  int in_flight_ = 0;
};

// Deterministic mock: replay(fixture), constant(text) or always_refuse().
class ScriptedBackend : public Backend {
 public:
  static std::unique_ptr<ScriptedBackend> replay(const std::filesystem::path& fixture);
  static std::unique_ptr<ScriptedBackend> constant(std::string text);
  static std::unique_ptr<ScriptedBackend> always_refuse();

  std::string id() const override { return "mock"; }
  CompletionResponse complete(const CompletionRequest& request) override;

 private:
  enum class Policy { Replay, Constant, AlwaysRefuse };
  Policy policy_ = Policy::Constant;
  std::string constant_text_;
  std::map<std::string, CompletionResponse> fixture_;
};

// Append-only digest-addressed response store (JSONL). A cache file doubles as
// a replay fixture. put() of a conflicting payload for a known digest throws.
class CacheStore {
 public:
  explicit CacheStore(std::filesystem::path path);

  std::optional<CompletionResponse> get(const std::string& digest) const;
  void put(const std::string& digest, const CompletionResponse& response);
  std::size_t size() const;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
  std::map<std::string, CompletionResponse> entries_;
  mutable std::mutex mutex_;
};

// One JSONL transcript file per post under <run_dir>/transcripts/.
class TranscriptStore {
 public:
  explicit TranscriptStore(std::filesystem::path run_dir);
  void append(const std::string& post_id, const std::string& json_line);
  std::filesystem::path post_path(const std::string& post_id) const;

 private:
  std::filesystem::path dir_;
  std::mutex mutex_;
};

struct ServiceOptions {
  // Freeze timestamps and latencies so mock runs are byte-reproducible.
  bool deterministic = false;
};

// Completion front door: cache lookup, backend call, transcript persistence —
// in that order, so no unrecorded output can influence a verdict.
class CompletionService {
 public:
  CompletionService(Backend& backend, CacheStore* cache, TranscriptStore* transcripts,
                    ServiceOptions options = {});

  CompletionResponse complete(const std::string& post_id, const CompletionRequest& request);

  long backend_calls() const;
  long cache_hits() const;

 private:
  Backend& backend_;
  CacheStore* cache_;
  TranscriptStore* transcripts_;
  ServiceOptions options_;
  mutable std::mutex mutex_;
  long backend_calls_ = 0;
  long cache_hits_ = 0;
};

struct BackendConfig {
  std::string kind;  // "http" | "mock"
  std::string model_id;
  DecodingParams decoding;
  int max_retries = 3;
  int max_in_flight = 4;
  // http
  std::string base_url;
  std::string api_key_env = "LEXEVAL_API_KEY";
  // mock
  std::string policy;  // "replay" | "constant" | "always_refuse"
  std::filesystem::path fixture;
  std::string constant_text;

  std::string fingerprint;  // content hash of the config file
};

BackendConfig load_backend_config(const std::filesystem::path& path);
std::unique_ptr<Backend> make_backend(const BackendConfig& config);

}  // namespace lexeval
