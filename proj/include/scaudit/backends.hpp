#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scaudit/error.hpp"
#include "scaudit/jsonl.hpp"
#include "scaudit/prompting.hpp"

namespace scaudit {

// Defaults are the sampling settings the harness was designed around.
struct GenerationParams {
  int max_new_tokens = 800;
  double temperature = 0.1;
  int top_k = 10;
  double top_p = 0.95;
  int num_return_sequences = 1;
  double repetition_penalty = 1.5;

  // Throws BadParams.
  void validate() const;
  json to_json() const;
  // Missing fields keep their defaults.
  static GenerationParams from_json(const json& doc);

  bool operator==(const GenerationParams&) const = default;
};

enum class BackendKind { HttpChat, Mock, Replay };

std::string_view to_string(BackendKind kind);

struct BackendSpec {
  std::string backend_id;
  BackendKind kind = BackendKind::Mock;
  std::string endpoint;    // http_chat only
  std::string model_name;
  std::string auth;        // name of the environment variable holding the API key
  int timeout_seconds = 120;

  // mock: canned text, optionally per contract; `mock_failure` forces an error.
  std::string mock_response;
  std::map<std::string, std::string> mock_responses;
  std::optional<ErrorCode> mock_failure;

  // replay: line-delimited {backend_id, contract_id, raw_text}.
  std::string replay_file;

  // Throws BadBackendSpec.
  void validate() const;
  json to_json() const;
  static BackendSpec from_json(const json& doc, const fs::path& base_dir = {});
};

struct Completion {
  std::string backend_id;
  std::string contract_id;
  std::string prompt_hash;
  std::string raw_text;
  std::int64_t latency_ms = 0;
  bool from_cache = false;
};

// Stable SHA-256 over (backend_id, model_name, prompt text, params).
std::string prompt_hash(const BackendSpec& spec, std::string_view prompt_text,
                        const GenerationParams& params);

class Backend {
 public:
  explicit Backend(BackendSpec spec) : spec_(std::move(spec)) {}
  virtual ~Backend() = default;
  Backend(const Backend&) = delete;
  Backend& operator=(const Backend&) = delete;

  const BackendSpec& spec() const { return spec_; }
  const std::string& id() const { return spec_.backend_id; }

  // Counts every attempt, successful or not.
  std::string generate(const RenderedPrompt& prompt, const GenerationParams& params) {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return do_generate(prompt, params);
  }

  std::size_t call_count() const { return calls_.load(std::memory_order_relaxed); }
  void reset_call_count() { calls_.store(0, std::memory_order_relaxed); }

 protected:
  virtual std::string do_generate(const RenderedPrompt& prompt, const GenerationParams& params) = 0;

 private:
  BackendSpec spec_;
  std::atomic<std::size_t> calls_{0};
};

class MockBackend final : public Backend {
 public:
  using Responder = std::function<std::string(const RenderedPrompt&)>;

  explicit MockBackend(BackendSpec spec);
  MockBackend(BackendSpec spec, Responder responder);

 protected:
  std::string do_generate(const RenderedPrompt& prompt, const GenerationParams& params) override;

 private:
  Responder responder_;
};

class ReplayBackend final : public Backend {
 public:
  explicit ReplayBackend(BackendSpec spec);

 protected:
  std::string do_generate(const RenderedPrompt& prompt, const GenerationParams& params) override;

 private:
  std::map<std::string, std::string> by_contract_;
};

// Chat-completion style endpoint: POST {model, messages, sampling params},
// reply {choices: [{message: {content}}]}.
class HttpChatBackend final : public Backend {
 public:
  explicit HttpChatBackend(BackendSpec spec);

  // Request body for one prompt; exposed for wire-format tests.
  static json request_body(const BackendSpec& spec, std::string_view prompt_text,
                           const GenerationParams& params);

 protected:
  std::string do_generate(const RenderedPrompt& prompt, const GenerationParams& params) override;
};

std::unique_ptr<Backend> make_backend(const BackendSpec& spec);

// Backends keyed by unique id, kept sorted by id.
class BackendRegistry {
 public:
  BackendRegistry() = default;

  // {"backends": [BackendSpec, ...]}; relative replay paths resolve against the file.
  static BackendRegistry load(const fs::path& path);

  void add(std::unique_ptr<Backend> backend);
  Backend* find(std::string_view backend_id) const;
  std::vector<Backend*> backends() const;
  std::vector<std::string> ids() const;
  std::size_t size() const { return backends_.size(); }
  std::size_t total_calls() const;
  json to_json() const;

 private:
  std::vector<std::unique_ptr<Backend>> backends_;
};

// Content-addressed store: <dir>/<hash[0:2]>/<hash>.json, written via rename.
class ResponseCache {
 public:
  explicit ResponseCache(fs::path dir);

  std::optional<Completion> get(const std::string& hash) const;
  void put(const Completion& completion);

  // Serializes the fetch for one hash so concurrent callers query once.
  std::unique_lock<std::mutex> lock_entry(const std::string& hash);

  const fs::path& dir() const { return dir_; }

 private:
  fs::path path_for(const std::string& hash) const;

  fs::path dir_;
  std::mutex table_mutex_;
  std::map<std::string, std::unique_ptr<std::mutex>> entry_mutexes_;
};

struct RetryPolicy {
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{1000};
  double multiplier = 2.0;
};

struct CallOptions {
  ResponseCache* cache = nullptr;
  RetryPolicy retry;
};

// Cache hit returns the stored completion with from_cache = true and does not
// touch the backend. Retriable failures are retried per the policy; the last
// error propagates.
Completion complete(Backend& backend, const RenderedPrompt& prompt, const GenerationParams& params,
                    const CallOptions& options);

struct FanoutResult {
  std::string backend_id;
  std::string contract_id;
  std::optional<Completion> completion;
  std::optional<Error> error;

  bool ok() const { return completion.has_value(); }
};

// One entry per (backend, prompt), ordered by (backend_id, contract_id).
// Per-item failures are recorded, never thrown.
std::vector<FanoutResult> fanout(std::span<Backend* const> backends,
                                 std::span<const RenderedPrompt> prompts,
                                 const GenerationParams& params, std::size_t parallelism,
                                 const CallOptions& options);

}  // namespace scaudit
