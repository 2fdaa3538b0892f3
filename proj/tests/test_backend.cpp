#include "lexeval/backend.hpp"

#include <atomic>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <thread>

#include <doctest/doctest.h>
#include <httplib.h>
#include <nlohmann/json.hpp>

#include "lexeval/error.hpp"
#include "lexeval/util.hpp"

using namespace lexeval;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

fs::path fresh_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / "lexeval-tests" / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

CompletionRequest simple_request(const std::string& text) {
  CompletionRequest request;
  request.model_id = "test-model";
  request.messages = {{Role::User, text}};
  return request;
}

}  // namespace

TEST_CASE("request digest covers every semantic field and nothing else") {
  CompletionRequest base = simple_request("hello");
  std::string digest = request_digest("mock", base);
  CHECK(digest == request_digest("mock", base));  // stable
  CHECK(digest.size() == 64);

  CHECK(request_digest("http:x", base) != digest);

  CompletionRequest other = base;
  other.model_id = "other-model";
  CHECK(request_digest("mock", other) != digest);

  other = base;
  other.messages[0].text = "hello!";
  CHECK(request_digest("mock", other) != digest);

  other = base;
  other.messages[0].role = Role::System;
  CHECK(request_digest("mock", other) != digest);

  other = base;
  other.messages.push_back({Role::Assistant, "hi"});
  CHECK(request_digest("mock", other) != digest);

  other = base;
  other.decoding.temperature = 0.7;
  CHECK(request_digest("mock", other) != digest);

  other = base;
  other.decoding.max_tokens = 2048;
  CHECK(request_digest("mock", other) != digest);

  other = base;
  other.decoding.seed = 7;
  CHECK(request_digest("mock", other) != digest);

  // the correlation tag is bookkeeping, not content
  other = base;
  other.request_tag = "post-7/step-2/p0";
  CHECK(request_digest("mock", other) == digest);
}

TEST_CASE("scripted constant and refuse policies") {
  auto constant = ScriptedBackend::constant("yes");
  CHECK(constant->id() == "mock");
  auto response = constant->complete(simple_request("anything"));
  CHECK(response.text == "yes");
  CHECK(response.finish_reason == FinishReason::Stop);

  auto refuser = ScriptedBackend::always_refuse();
  CHECK(refuser->id() == "mock");
  auto refusal = refuser->complete(simple_request("anything"));
  CHECK(refusal.finish_reason == FinishReason::Filter);
}

TEST_CASE("cache store round trip, reload and conflict") {
  fs::path dir = fresh_dir("cache");
  fs::path cache_path = dir / "cache.jsonl";
  CompletionResponse response{"answer", FinishReason::Stop, 12.5, "{\"raw\":true}"};

  {
    CacheStore cache(cache_path);
    CHECK(cache.size() == 0);
    CHECK_FALSE(cache.get("d1").has_value());
    cache.put("d1", response);
    CHECK(cache.size() == 1);
    auto hit = cache.get("d1");
    REQUIRE(hit.has_value());
    CHECK(hit->text == "answer");
    CHECK(hit->raw == "{\"raw\":true}");

    // same payload again: idempotent, no growth
    cache.put("d1", response);
    CHECK(cache.size() == 1);

    CompletionResponse conflicting{"different answer", FinishReason::Stop, 12.5, ""};
    CHECK_THROWS_WITH_AS(cache.put("d1", conflicting),
                         doctest::Contains("cache conflict for digest d1"), DataError);

    // differing latency alone is not a conflict
    CompletionResponse slower = response;
    slower.latency_ms = 99.0;
    CHECK_NOTHROW(cache.put("d1", slower));
  }

  // reopen: entries survive, appends extend the same file
  {
    CacheStore cache(cache_path);
    CHECK(cache.size() == 1);
    REQUIRE(cache.get("d1").has_value());
    CHECK(cache.get("d1")->finish_reason == FinishReason::Stop);
    cache.put("d2", {"second", FinishReason::Length, 1.0, ""});
  }
  {
    CacheStore cache(cache_path);
    CHECK(cache.size() == 2);
    CHECK(cache.get("d2")->finish_reason == FinishReason::Length);
  }
}

TEST_CASE("corrupted cache line is reported with its location") {
  fs::path dir = fresh_dir("cache-bad");
  fs::path cache_path = dir / "cache.jsonl";
  std::ofstream(cache_path) << R"({"digest":"d1","text":"ok","finish_reason":"stop"})" << "\n"
                            << "{torn write\n";
  CHECK_THROWS_WITH_AS(CacheStore{cache_path}, doctest::Contains(":2:"), DataError);
}

TEST_CASE("cache file replays through the scripted backend") {
  fs::path dir = fresh_dir("replay");
  fs::path cache_path = dir / "cache.jsonl";

  CompletionRequest request = simple_request("Is this covered?");
  {
    auto recorder = ScriptedBackend::constant("no");
    CacheStore cache(cache_path);
    cache.put(request_digest(recorder->id(), request), recorder->complete(request));
  }

  auto replayer = ScriptedBackend::replay(cache_path);
  auto response = replayer->complete(request);
  CHECK(response.text == "no");

  // unknown request: the error must show what was asked
  CHECK_THROWS_WITH_AS(replayer->complete(simple_request("Never recorded.")),
                       doctest::Contains("Never recorded."), BackendError);
}

TEST_CASE("transcript store writes one file per post, sanitized") {
  fs::path dir = fresh_dir("transcripts");
  TranscriptStore store(dir);
  store.append("post/1", R"({"a":1})");
  store.append("post/1", R"({"a":2})");
  store.append("p2", R"({"b":1})");

  fs::path p1 = store.post_path("post/1");
  CHECK(p1.filename().string() == "post_1.jsonl");
  CHECK(read_file(p1) == "{\"a\":1}\n{\"a\":2}\n");
  CHECK(read_file(store.post_path("p2")) == "{\"b\":1}\n");
}

TEST_CASE("completion service: cache short-circuits the backend") {
  fs::path dir = fresh_dir("service");
  auto backend = ScriptedBackend::constant("maybe");
  CacheStore cache(dir / "cache.jsonl");
  TranscriptStore transcripts(dir);
  CompletionService service(*backend, &cache, &transcripts, {.deterministic = true});

  CompletionRequest request = simple_request("once");
  service.complete("p1", request);
  CHECK(service.backend_calls() == 1);
  CHECK(service.cache_hits() == 0);

  service.complete("p1", request);
  CHECK(service.backend_calls() == 1);
  CHECK(service.cache_hits() == 1);

  service.complete("p1", simple_request("twice"));
  CHECK(service.backend_calls() == 2);
}

TEST_CASE("completion service transcripts are deterministic and replay-identical") {
  fs::path dir_a = fresh_dir("service-a");
  fs::path dir_b = fresh_dir("service-b");
  CompletionRequest request = simple_request("stable?");
  request.request_tag = "p1/s1/0";

  auto run = [&](const fs::path& dir) {
    auto backend = ScriptedBackend::constant("stable");
    CacheStore cache(dir / "cache.jsonl");
    TranscriptStore transcripts(dir);
    CompletionService service(*backend, &cache, &transcripts, {.deterministic = true});
    service.complete("p1", request);
    service.complete("p1", request);  // second call is a cache hit
    return read_file(transcripts.post_path("p1"));
  };

  std::string first = run(dir_a);
  std::string second = run(dir_b);
  CHECK(first == second);

  // every completion is on the record, cache hit or not
  json line = json::parse(first.substr(0, first.find('\n')));
  CHECK(line.at("timestamp") == "1970-01-01T00:00:00Z");
  CHECK(line.at("response").at("latency_ms") == 0.0);
  CHECK(line.at("tag") == "p1/s1/0");
  CHECK(first.find('\n') != first.rfind('\n'));  // two lines
}

TEST_CASE("http backend against a local server") {
  httplib::Server server;
  std::atomic<int> calls{0};
  std::atomic<int> fail_first{0};
  std::string seen_auth;
  std::string seen_body;
  server.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
    ++calls;
    seen_auth = req.get_header_value("Authorization");
    seen_body = req.body;
    if (fail_first.fetch_sub(1) > 0) {
      res.status = 503;
      return;
    }
    json payload = {
        {"choices",
         {{{"message", {{"role", "assistant"}, {"content", "It is punishable."}}},
           {"finish_reason", "stop"}}}},
    };
    res.set_content(payload.dump(), "application/json");
  });
  server.Post("/v1/filtered", [](const httplib::Request&, httplib::Response&) {});

  int port = server.bind_to_any_port("127.0.0.1");
  REQUIRE(port > 0);
  std::thread server_thread([&] { server.listen_after_bind(); });
  server.wait_until_ready();

  HttpBackendOptions options;
  options.base_url = "http://127.0.0.1:" + std::to_string(port) + "/v1";
  options.max_retries = 3;
  options.initial_backoff_ms = 1.0;

  SUBCASE("success carries the payload through") {
    setenv("LEXEVAL_API_KEY", "sk-test", 1);
    HttpBackend backend(options);
    CHECK(backend.id() == "http:" + options.base_url);
    CompletionRequest request = simple_request("Is it?");
    request.decoding.seed = 11;
    auto response = backend.complete(request);
    CHECK(response.text == "It is punishable.");
    CHECK(response.finish_reason == FinishReason::Stop);
    CHECK(response.latency_ms > 0.0);
    CHECK(seen_auth == "Bearer sk-test");
    json body = json::parse(seen_body);
    CHECK(body.at("model") == "test-model");
    CHECK(body.at("seed") == 11);
    CHECK(body.at("messages").at(0).at("content") == "Is it?");
    unsetenv("LEXEVAL_API_KEY");
  }

  SUBCASE("5xx responses are retried until one succeeds") {
    fail_first = 2;
    calls = 0;
    HttpBackend backend(options);
    auto response = backend.complete(simple_request("retry me"));
    CHECK(response.text == "It is punishable.");
    CHECK(calls == 3);
  }

  SUBCASE("persistent failure surfaces the attempt log") {
    fail_first = 100;
    HttpBackend backend(options);
    try {
      backend.complete(simple_request("hopeless"));
      FAIL("expected BackendError");
    } catch (const BackendError& e) {
      CHECK(e.attempts().size() == 3);
      CHECK(e.attempts()[0].find("HTTP 503") != std::string::npos);
    }
  }

  SUBCASE("unreachable host exhausts retries with transport errors") {
    HttpBackendOptions dead = options;
    dead.base_url = "http://127.0.0.1:1/v1";  // nothing listens there
    HttpBackend backend(dead);
    try {
      backend.complete(simple_request("void"));
      FAIL("expected BackendError");
    } catch (const BackendError& e) {
      CHECK(e.attempts().size() == 3);
      CHECK(e.attempts()[0].find("transport error") != std::string::npos);
    }
  }

  server.stop();
  server_thread.join();
}

TEST_CASE("backend config files") {
  fs::path dir = fresh_dir("config");

  SUBCASE("mock constant") {
    fs::path path = dir / "mock.json";
    std::ofstream(path) << R"({"schema_version":1,"kind":"mock","policy":"constant","text":"no"})";
    BackendConfig config = load_backend_config(path);
    CHECK(config.kind == "mock");
    CHECK(config.model_id == "mock-model");
    CHECK(config.fingerprint == sha256_hex(read_file(path)));
    auto backend = make_backend(config);
    CHECK(backend->complete(simple_request("x")).text == "no");
  }

  SUBCASE("mock replay resolves the fixture relative to the config") {
    fs::path fixture = dir / "fixture.jsonl";
    std::ofstream{fixture};  // empty fixture is fine until a lookup happens
    fs::path path = dir / "replay.json";
    std::ofstream(path)
        << R"({"schema_version":1,"kind":"mock","policy":"replay","fixture":"fixture.jsonl"})";
    BackendConfig config = load_backend_config(path);
    CHECK(config.fixture == fixture);
    CHECK_NOTHROW(make_backend(config));
  }

  SUBCASE("http") {
    fs::path path = dir / "http.json";
    std::ofstream(path) << R"({"schema_version":1,"kind":"http","model_id":"m",
        "base_url":"http://localhost:9/v1","decoding":{"temperature":0.2,"seed":3},
        "max_in_flight":2})";
    BackendConfig config = load_backend_config(path);
    CHECK(config.base_url == "http://localhost:9/v1");
    CHECK(config.decoding.temperature == 0.2);
    CHECK(config.decoding.seed == 3);
    CHECK(config.max_in_flight == 2);
    auto backend = make_backend(config);
    CHECK(backend->id() == "http:http://localhost:9/v1");
  }

  SUBCASE("rejects nonsense") {
    fs::path path = dir / "bad.json";
    std::ofstream(path) << R"({"schema_version":1,"kind":"carrier-pigeon"})";
    CHECK_THROWS_WITH_AS(load_backend_config(path), doctest::Contains("carrier-pigeon"),
                         DataError);

    std::ofstream(path, std::ios::trunc)
        << R"({"schema_version":1,"kind":"mock","policy":"telepathy"})";
    CHECK_THROWS_WITH_AS(load_backend_config(path), doctest::Contains("telepathy"), DataError);

    std::ofstream(path, std::ios::trunc) << R"({"kind":"mock","policy":"always_refuse"})";
    CHECK_THROWS_WITH_AS(load_backend_config(path), doctest::Contains("schema_version"),
                         DataError);

    std::ofstream(path, std::ios::trunc)
        << R"({"schema_version":1,"kind":"mock","policy":"constant","text":"x",
               "decoding":{"max_tokens":0}})";
    CHECK_THROWS_WITH_AS(load_backend_config(path), doctest::Contains("max_tokens"), DataError);
  }
}
