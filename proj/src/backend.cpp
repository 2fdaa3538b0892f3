#include "lexeval/backend.hpp"

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lexeval/error.hpp"
#include "lexeval/util.hpp"

using nlohmann::json;

namespace lexeval {

namespace {

constexpr std::string_view kRoleNames[] = {"system", "user", "assistant"};
constexpr std::string_view kFinishNames[] = {"stop", "length", "filter", "error"};

json response_to_json(const std::string& digest, const CompletionResponse& response) {
  json rec;
  rec["digest"] = digest;
  rec["text"] = response.text;
  rec["finish_reason"] = std::string(to_string(response.finish_reason));
  rec["latency_ms"] = response.latency_ms;
  if (!response.raw.empty()) rec["raw"] = response.raw;
  return rec;
}

CompletionResponse response_from_json(const json& rec) {
  CompletionResponse response;
  response.text = rec.at("text").get<std::string>();
  response.finish_reason = finish_reason_from_string(rec.value("finish_reason", "stop"));
  response.latency_ms = rec.value("latency_ms", 0.0);
  response.raw = rec.value("raw", "");
  return response;
}

std::string last_user_text(const CompletionRequest& request) {
  for (auto it = request.messages.rbegin(); it != request.messages.rend(); ++it) {
    if (it->role == Role::User) return it->text;
  }
  return request.messages.empty() ? std::string() : request.messages.back().text;
}

}  // namespace

std::string_view to_string(Role role) { return kRoleNames[static_cast<std::size_t>(role)]; }

Role role_from_string(std::string_view name) {
  for (std::size_t i = 0; i < 3; ++i) {
    if (kRoleNames[i] == name) return static_cast<Role>(i);
  }
  throw DataError("unknown message role: '" + std::string(name) + "'");
}

std::string_view to_string(FinishReason reason) {
  return kFinishNames[static_cast<std::size_t>(reason)];
}

FinishReason finish_reason_from_string(std::string_view name) {
  for (std::size_t i = 0; i < 4; ++i) {
    if (kFinishNames[i] == name) return static_cast<FinishReason>(i);
  }
  throw DataError("unknown finish reason: '" + std::string(name) + "'");
}

std::string request_digest(std::string_view backend_id, const CompletionRequest& request) {
  // Canonical serialization; nlohmann sorts object keys, so equal inputs
  // always produce equal bytes.
  json doc;
  doc["backend"] = std::string(backend_id);
  doc["model"] = request.model_id;
  doc["temperature"] = request.decoding.temperature;
  doc["max_tokens"] = request.decoding.max_tokens;
  if (request.decoding.seed) doc["seed"] = *request.decoding.seed;
  doc["messages"] = json::array();
  for (const Message& m : request.messages) {
    doc["messages"].push_back({std::string(to_string(m.role)), m.text});
  }
  return sha256_hex(doc.dump());
}

// --- HttpBackend ------------------------------------------------------------

HttpBackend::HttpBackend(HttpBackendOptions options) : options_(std::move(options)) {
  if (options_.base_url.empty()) throw DataError("http backend needs a base_url");
}

std::string HttpBackend::id() const { return "http:" + options_.base_url; }

CompletionResponse HttpBackend::complete(const CompletionRequest& request) {
  if (request.messages.empty()) throw DataError("completion request has no messages");

  std::unique_lock lock(slots_mutex_);
  slots_free_.wait(lock, [&] { return in_flight_ < options_.max_in_flight; });
  ++in_flight_;
  lock.unlock();
  struct SlotGuard {
    HttpBackend* self;
    ~SlotGuard() {
      std::lock_guard guard(self->slots_mutex_);
      --self->in_flight_;
      self->slots_free_.notify_one();
    }
  } slot_guard{this};

  json body;
  body["model"] = request.model_id;
  body["temperature"] = request.decoding.temperature;
  body["max_tokens"] = request.decoding.max_tokens;
  if (request.decoding.seed) body["seed"] = *request.decoding.seed;
  body["messages"] = json::array();
  for (const Message& m : request.messages) {
    body["messages"].push_back({{"role", std::string(to_string(m.role))}, {"content", m.text}});
  }

  // base_url = scheme://host[:port][/prefix]
  std::string url = options_.base_url;
  std::string prefix;
  std::size_t scheme = url.find("://");
  std::size_t path_start = scheme == std::string::npos ? url.find('/') : url.find('/', scheme + 3);
  if (path_start != std::string::npos) {
    prefix = url.substr(path_start);
    url = url.substr(0, path_start);
  }
  while (!prefix.empty() && prefix.back() == '/') prefix.pop_back();
  std::string endpoint = prefix + "/chat/completions";

  httplib::Headers headers;
  if (const char* key = std::getenv(options_.api_key_env.c_str()); key && *key) {
    headers.emplace("Authorization", std::string("Bearer ") + key);
  }

  std::vector<std::string> attempts;
  double backoff_ms = options_.initial_backoff_ms;
  for (int attempt = 1; attempt <= options_.max_retries; ++attempt) {
    auto started = std::chrono::steady_clock::now();
    httplib::Client client(url);
    client.set_connection_timeout(30, 0);
    client.set_read_timeout(300, 0);
    auto result = client.Post(endpoint, headers, body.dump(), "application/json");
    double elapsed_ms = std::chrono::duration<double, std::milli>(
                            std::chrono::steady_clock::now() - started)
                            .count();

    if (!result) {
      attempts.push_back("attempt " + std::to_string(attempt) + ": transport error (" +
                         httplib::to_string(result.error()) + ")");
    } else if (result->status == 429 || result->status >= 500) {
      attempts.push_back("attempt " + std::to_string(attempt) + ": HTTP " +
                         std::to_string(result->status));
    } else if (result->status != 200) {
      attempts.push_back("attempt " + std::to_string(attempt) + ": HTTP " +
                         std::to_string(result->status) + " (not retryable)");
      throw BackendError("backend rejected request: HTTP " + std::to_string(result->status),
                         attempts);
    } else {
      json payload;
      try {
        payload = json::parse(result->body);
        const auto& choice = payload.at("choices").at(0);
        CompletionResponse response;
        response.text = choice.at("message").at("content").get<std::string>();
        std::string reason = choice.value("finish_reason", "stop");
        if (reason == "stop") response.finish_reason = FinishReason::Stop;
        else if (reason == "length") response.finish_reason = FinishReason::Length;
        else if (reason == "content_filter") response.finish_reason = FinishReason::Filter;
        else response.finish_reason = FinishReason::Error;
        response.latency_ms = elapsed_ms;
        response.raw = result->body;
        return response;
      } catch (const json::exception& e) {
        attempts.push_back("attempt " + std::to_string(attempt) + ": unparseable payload (" +
                           e.what() + ")");
      }
    }
    if (attempt < options_.max_retries) {
      std::this_thread::sleep_for(std::chrono::duration<double, std::milli>(backoff_ms));
      backoff_ms *= 2;
    }
  }
  throw BackendError("backend unreachable after " + std::to_string(options_.max_retries) +
                         " attempts",
                     attempts);
}

// --- ScriptedBackend --------------------------------------------------------

std::unique_ptr<ScriptedBackend> ScriptedBackend::replay(const std::filesystem::path& fixture) {
  auto backend = std::make_unique<ScriptedBackend>();
  backend->policy_ = Policy::Replay;
  for_each_line(fixture, [&](int line_no, std::string_view line) {
    json rec;
    try {
      rec = json::parse(line);
      backend->fixture_[rec.at("digest").get<std::string>()] = response_from_json(rec);
    } catch (const json::exception& e) {
      throw DataError(fixture.string() + ":" + std::to_string(line_no) + ": bad fixture record: " +
                      e.what());
    }
  });
  return backend;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::constant(std::string text) {
  auto backend = std::make_unique<ScriptedBackend>();
  backend->policy_ = Policy::Constant;
  backend->constant_text_ = std::move(text);
  return backend;
}

std::unique_ptr<ScriptedBackend> ScriptedBackend::always_refuse() {
  auto backend = std::make_unique<ScriptedBackend>();
  backend->policy_ = Policy::AlwaysRefuse;
  return backend;
}

CompletionResponse ScriptedBackend::complete(const CompletionRequest& request) {
  switch (policy_) {
    case Policy::Constant:
      return {constant_text_, FinishReason::Stop, 0.0, ""};
    case Policy::AlwaysRefuse:
      return {"I can't help with that.", FinishReason::Filter, 0.0, ""};
    case Policy::Replay: {
      std::string digest = request_digest(id(), request);
      auto it = fixture_.find(digest);
      if (it == fixture_.end()) {
        throw BackendError("replay fixture has no response for digest " + digest +
                           "; prompt was:\n" + last_user_text(request));
      }
      return it->second;
    }
  }
  throw BackendError("unreachable policy");
}

// --- CacheStore -------------------------------------------------------------

CacheStore::CacheStore(std::filesystem::path path) : path_(std::move(path)) {
  if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
  if (!std::filesystem::exists(path_)) return;
  for_each_line(path_, [&](int line_no, std::string_view line) {
    json rec;
    try {
      rec = json::parse(line);
      entries_[rec.at("digest").get<std::string>()] = response_from_json(rec);
    } catch (const json::exception& e) {
      throw DataError("corrupted cache record at " + path_.string() + ":" +
                      std::to_string(line_no) + ": " + e.what());
    }
  });
}

std::optional<CompletionResponse> CacheStore::get(const std::string& digest) const {
  std::lock_guard guard(mutex_);
  auto it = entries_.find(digest);
  if (it == entries_.end()) return std::nullopt;
  return it->second;
}

void CacheStore::put(const std::string& digest, const CompletionResponse& response) {
  std::lock_guard guard(mutex_);
  auto it = entries_.find(digest);
  if (it != entries_.end()) {
    // latency is observational; the substantive payload must not change
    if (it->second.text != response.text ||
        it->second.finish_reason != response.finish_reason) {
      throw DataError("cache conflict for digest " + digest +
                      ": differing response for identical request");
    }
    return;
  }
  std::ofstream out(path_, std::ios::binary | std::ios::app);
  if (!out) throw DataError("cannot append to cache: " + path_.string());
  out << response_to_json(digest, response).dump() << "\n";
  out.flush();
  if (!out) throw DataError("cache write failed: " + path_.string());
  entries_[digest] = response;
}

std::size_t CacheStore::size() const {
  std::lock_guard guard(mutex_);
  return entries_.size();
}

// --- TranscriptStore --------------------------------------------------------

TranscriptStore::TranscriptStore(std::filesystem::path run_dir)
    : dir_(std::move(run_dir)) {
  std::filesystem::create_directories(dir_ / "transcripts");
}

std::filesystem::path TranscriptStore::post_path(const std::string& post_id) const {
  return dir_ / "transcripts" / (sanitize_for_path(post_id) + ".jsonl");
}

void TranscriptStore::append(const std::string& post_id, const std::string& json_line) {
  std::lock_guard guard(mutex_);
  std::ofstream out(post_path(post_id), std::ios::binary | std::ios::app);
  if (!out) throw DataError("cannot append transcript for post " + post_id);
  out << json_line << "\n";
}

// --- CompletionService ------------------------------------------------------

CompletionService::CompletionService(Backend& backend, CacheStore* cache,
                                     TranscriptStore* transcripts, ServiceOptions options)
    : backend_(backend), cache_(cache), transcripts_(transcripts), options_(options) {}

CompletionResponse CompletionService::complete(const std::string& post_id,
                                               const CompletionRequest& request) {
  std::string digest = request_digest(backend_.id(), request);

  std::optional<CompletionResponse> response;
  if (cache_) response = cache_->get(digest);
  if (response) {
    std::lock_guard guard(mutex_);
    ++cache_hits_;
  } else {
    response = backend_.complete(request);
    if (options_.deterministic) response->latency_ms = 0.0;
    if (cache_) cache_->put(digest, *response);
    std::lock_guard guard(mutex_);
    ++backend_calls_;
  }

  if (transcripts_) {
    json rec;
    rec["digest"] = digest;
    rec["tag"] = request.request_tag;
    rec["model"] = request.model_id;
    rec["messages"] = json::array();
    for (const Message& m : request.messages) {
      rec["messages"].push_back({{"role", std::string(to_string(m.role))}, {"content", m.text}});
    }
    rec["response"] = {{"text", response->text},
                       {"finish_reason", std::string(to_string(response->finish_reason))},
                       {"latency_ms", options_.deterministic ? 0.0 : response->latency_ms}};
    rec["timestamp"] = options_.deterministic ? "1970-01-01T00:00:00Z" : utc_timestamp();
    transcripts_->append(post_id, rec.dump());
  }
  return *response;
}

long CompletionService::backend_calls() const {
  std::lock_guard guard(mutex_);
  return backend_calls_;
}

long CompletionService::cache_hits() const {
  std::lock_guard guard(mutex_);
  return cache_hits_;
}

// --- configuration ----------------------------------------------------------

BackendConfig load_backend_config(const std::filesystem::path& path) {
  std::string content = read_file(path);
  json doc;
  try {
    doc = json::parse(content);
  } catch (const json::parse_error& e) {
    throw DataError(path.string() + ": not valid JSON: " + e.what());
  }
  if (doc.value("schema_version", -1) != 1) {
    throw DataError(path.string() + ": missing or unsupported schema_version");
  }
  BackendConfig config;
  try {
    config.kind = doc.at("kind").get<std::string>();
    config.model_id = doc.value("model_id", config.kind == "mock" ? "mock-model" : "");
    if (doc.contains("decoding")) {
      const auto& d = doc.at("decoding");
      config.decoding.temperature = d.value("temperature", 0.0);
      config.decoding.max_tokens = d.value("max_tokens", 1024);
      if (d.contains("seed")) config.decoding.seed = d.at("seed").get<long>();
    }
    config.max_retries = doc.value("max_retries", 3);
    config.max_in_flight = doc.value("max_in_flight", 4);
    if (config.kind == "http") {
      config.base_url = doc.at("base_url").get<std::string>();
      config.api_key_env = doc.value("api_key_env", "LEXEVAL_API_KEY");
      if (config.model_id.empty()) throw DataError(path.string() + ": http backend needs model_id");
    } else if (config.kind == "mock") {
      config.policy = doc.value("policy", "constant");
      if (config.policy == "replay") {
        std::filesystem::path fixture = doc.at("fixture").get<std::string>();
        if (fixture.is_relative()) fixture = path.parent_path() / fixture;
        config.fixture = fixture;
      } else if (config.policy == "constant") {
        config.constant_text = doc.at("text").get<std::string>();
      } else if (config.policy != "always_refuse") {
        throw DataError(path.string() + ": unknown mock policy '" + config.policy + "'");
      }
    } else {
      throw DataError(path.string() + ": unknown backend kind '" + config.kind + "'");
    }
  } catch (const json::exception& e) {
    throw DataError(path.string() + ": " + e.what());
  }
  if (config.decoding.temperature < 0) {
    throw DataError(path.string() + ": temperature must be >= 0");
  }
  if (config.decoding.max_tokens <= 0) {
    throw DataError(path.string() + ": max_tokens must be positive");
  }
  config.fingerprint = sha256_hex(content);
  return config;
}

std::unique_ptr<Backend> make_backend(const BackendConfig& config) {
  if (config.kind == "http") {
    HttpBackendOptions options;
    options.base_url = config.base_url;
    options.api_key_env = config.api_key_env;
    options.max_retries = config.max_retries;
    options.max_in_flight = config.max_in_flight;
    return std::make_unique<HttpBackend>(options);
  }
  if (config.policy == "replay") return ScriptedBackend::replay(config.fixture);
  if (config.policy == "always_refuse") return ScriptedBackend::always_refuse();
  return ScriptedBackend::constant(config.constant_text);
}

}  // namespace lexeval
