#include "scaudit/backends.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <thread>

#include "scaudit/hashing.hpp"

namespace scaudit {

void GenerationParams::validate() const {
  if (max_new_tokens <= 0) throw Error(ErrorCode::BadParams, "max_new_tokens must be positive");
  if (!(temperature > 0.0) || !std::isfinite(temperature)) {
    throw Error(ErrorCode::BadParams, "temperature must be positive");
  }
  if (top_k <= 0) throw Error(ErrorCode::BadParams, "top_k must be positive");
  if (!(top_p > 0.0 && top_p <= 1.0)) throw Error(ErrorCode::BadParams, "top_p must lie in (0, 1]");
  if (num_return_sequences != 1) {
    throw Error(ErrorCode::BadParams, "num_return_sequences must be 1");
  }
  if (!(repetition_penalty > 0.0) || !std::isfinite(repetition_penalty)) {
    throw Error(ErrorCode::BadParams, "repetition_penalty must be positive");
  }
}

json GenerationParams::to_json() const {
  return json{{"max_new_tokens", max_new_tokens},
              {"temperature", temperature},
              {"top_k", top_k},
              {"top_p", top_p},
              {"num_return_sequences", num_return_sequences},
              {"repetition_penalty", repetition_penalty}};
}

GenerationParams GenerationParams::from_json(const json& doc) {
  if (!doc.is_object()) throw Error(ErrorCode::BadParams, "generation params must be an object");
  GenerationParams p;
  try {
    p.max_new_tokens = doc.value("max_new_tokens", p.max_new_tokens);
    p.temperature = doc.value("temperature", p.temperature);
    p.top_k = doc.value("top_k", p.top_k);
    p.top_p = doc.value("top_p", p.top_p);
    p.num_return_sequences = doc.value("num_return_sequences", p.num_return_sequences);
    p.repetition_penalty = doc.value("repetition_penalty", p.repetition_penalty);
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadParams, e.what());
  }
  p.validate();
  return p;
}

std::string_view to_string(BackendKind kind) {
  switch (kind) {
    case BackendKind::HttpChat: return "http_chat";
    case BackendKind::Mock: return "mock";
    case BackendKind::Replay: return "replay";
  }
  return "mock";
}

namespace {

BackendKind parse_kind(std::string_view text) {
  if (text == "http_chat") return BackendKind::HttpChat;
  if (text == "mock") return BackendKind::Mock;
  if (text == "replay") return BackendKind::Replay;
  throw Error(ErrorCode::BadBackendSpec, "unknown backend kind '" + std::string(text) + "'");
}

std::optional<ErrorCode> parse_failure_code(std::string_view text) {
  if (text.empty()) return std::nullopt;
  if (text == "network") return ErrorCode::NetworkError;
  if (text == "auth") return ErrorCode::AuthError;
  if (text == "refusal") return ErrorCode::BackendRefusal;
  if (text == "context_overflow") return ErrorCode::ContextOverflow;
  throw Error(ErrorCode::BadBackendSpec, "unknown mock_failure '" + std::string(text) + "'");
}

std::string_view failure_name(ErrorCode code) {
  switch (code) {
    case ErrorCode::NetworkError: return "network";
    case ErrorCode::AuthError: return "auth";
    case ErrorCode::ContextOverflow: return "context_overflow";
    default: return "refusal";
  }
}

bool well_formed_endpoint(std::string_view url) {
  std::string_view rest;
  if (url.starts_with("http://")) {
    rest = url.substr(7);
  } else if (url.starts_with("https://")) {
    rest = url.substr(8);
  } else {
    return false;
  }
  const auto host_end = rest.find('/');
  std::string_view host = rest.substr(0, host_end);
  return !host.empty() && host.find_first_of(" \t") == std::string_view::npos && host.front() != ':';
}

}  // namespace

void BackendSpec::validate() const {
  if (backend_id.empty()) throw Error(ErrorCode::BadBackendSpec, "backend_id is empty");
  if (kind == BackendKind::HttpChat) {
    if (!well_formed_endpoint(endpoint)) {
      throw Error(ErrorCode::BadBackendSpec, backend_id + ": malformed endpoint '" + endpoint + "'");
    }
    if (model_name.empty()) throw Error(ErrorCode::BadBackendSpec, backend_id + ": model_name is empty");
  }
  if (kind == BackendKind::Replay && replay_file.empty()) {
    throw Error(ErrorCode::BadBackendSpec, backend_id + ": replay backend needs replay_file");
  }
  if (timeout_seconds <= 0) throw Error(ErrorCode::BadBackendSpec, backend_id + ": bad timeout");
}

json BackendSpec::to_json() const {
  json doc{{"backend_id", backend_id},
           {"kind", std::string(to_string(kind))},
           {"model_name", model_name}};
  if (!endpoint.empty()) doc["endpoint"] = endpoint;
  if (!auth.empty()) doc["auth"] = auth;
  if (kind == BackendKind::HttpChat) doc["timeout_seconds"] = timeout_seconds;
  if (kind == BackendKind::Mock) {
    if (!mock_response.empty()) doc["mock_response"] = mock_response;
    if (!mock_responses.empty()) doc["mock_responses"] = mock_responses;
    if (mock_failure) doc["mock_failure"] = std::string(failure_name(*mock_failure));
  }
  if (!replay_file.empty()) doc["replay_file"] = replay_file;
  return doc;
}

BackendSpec BackendSpec::from_json(const json& doc, const fs::path& base_dir) {
  if (!doc.is_object()) throw Error(ErrorCode::BadBackendSpec, "backend spec must be an object");
  BackendSpec spec;
  try {
    spec.backend_id = doc.at("backend_id").get<std::string>();
    spec.kind = parse_kind(doc.at("kind").get<std::string>());
    spec.endpoint = doc.value("endpoint", std::string());
    spec.model_name = doc.value("model_name", spec.backend_id);
    spec.auth = doc.value("auth", std::string());
    spec.timeout_seconds = doc.value("timeout_seconds", spec.timeout_seconds);
    spec.mock_response = doc.value("mock_response", std::string());
    if (doc.contains("mock_responses")) {
      spec.mock_responses = doc.at("mock_responses").get<std::map<std::string, std::string>>();
    }
    spec.mock_failure = parse_failure_code(doc.value("mock_failure", std::string()));
    spec.replay_file = doc.value("replay_file", std::string());
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadBackendSpec, e.what());
  }
  if (!spec.replay_file.empty() && !base_dir.empty() && fs::path(spec.replay_file).is_relative()) {
    spec.replay_file = (base_dir / spec.replay_file).lexically_normal().string();
  }
  spec.validate();
  return spec;
}

std::string prompt_hash(const BackendSpec& spec, std::string_view prompt_text,
                        const GenerationParams& params) {
  json material{{"backend_id", spec.backend_id},
                {"model_name", spec.model_name},
                {"prompt", prompt_text},
                {"params", params.to_json()}};
  return sha256_hex(material.dump());
}

MockBackend::MockBackend(BackendSpec spec) : Backend(std::move(spec)) {}

MockBackend::MockBackend(BackendSpec spec, Responder responder)
    : Backend(std::move(spec)), responder_(std::move(responder)) {}

std::string MockBackend::do_generate(const RenderedPrompt& prompt, const GenerationParams&) {
  if (spec().mock_failure) throw Error(*spec().mock_failure, id() + ": configured mock failure");
  if (responder_) return responder_(prompt);
  if (auto it = spec().mock_responses.find(prompt.contract_id); it != spec().mock_responses.end()) {
    return it->second;
  }
  return spec().mock_response;
}

ReplayBackend::ReplayBackend(BackendSpec spec) : Backend(std::move(spec)) {
  for (const json& record : read_jsonl(this->spec().replay_file)) {
    if (!record.is_object() || !record.contains("backend_id") || !record.contains("contract_id") ||
        !record.contains("raw_text")) {
      throw Error(ErrorCode::BadBackendSpec, this->spec().replay_file + ": malformed replay record");
    }
    if (record.at("backend_id").get<std::string>() != id()) continue;
    by_contract_[record.at("contract_id").get<std::string>()] = record.at("raw_text").get<std::string>();
  }
}

std::string ReplayBackend::do_generate(const RenderedPrompt& prompt, const GenerationParams&) {
  auto it = by_contract_.find(prompt.contract_id);
  if (it == by_contract_.end()) {
    throw Error(ErrorCode::BackendRefusal, id() + ": no recorded completion for " + prompt.contract_id);
  }
  return it->second;
}

std::unique_ptr<Backend> make_backend(const BackendSpec& spec) {
  spec.validate();
  switch (spec.kind) {
    case BackendKind::HttpChat: return std::make_unique<HttpChatBackend>(spec);
    case BackendKind::Mock: return std::make_unique<MockBackend>(spec);
    case BackendKind::Replay: return std::make_unique<ReplayBackend>(spec);
  }
  throw Error(ErrorCode::BadBackendSpec, "unhandled backend kind");
}

BackendRegistry BackendRegistry::load(const fs::path& path) {
  json doc = read_json_file(path);
  if (!doc.is_object() || !doc.contains("backends") || !doc.at("backends").is_array()) {
    throw Error(ErrorCode::BadBackendSpec, path.string() + ": expected {\"backends\": [...]}");
  }
  // Parse every spec before constructing any backend.
  std::vector<BackendSpec> specs;
  for (const json& entry : doc.at("backends")) {
    specs.push_back(BackendSpec::from_json(entry, path.parent_path()));
  }
  BackendRegistry registry;
  for (const auto& spec : specs) registry.add(make_backend(spec));
  return registry;
}

void BackendRegistry::add(std::unique_ptr<Backend> backend) {
  if (find(backend->id()) != nullptr) {
    throw Error(ErrorCode::BadBackendSpec, "duplicate backend_id '" + backend->id() + "'");
  }
  auto pos = std::lower_bound(backends_.begin(), backends_.end(), backend->id(),
                              [](const auto& b, const std::string& id) { return b->id() < id; });
  backends_.insert(pos, std::move(backend));
}

Backend* BackendRegistry::find(std::string_view backend_id) const {
  for (const auto& b : backends_) {
    if (b->id() == backend_id) return b.get();
  }
  return nullptr;
}

std::vector<Backend*> BackendRegistry::backends() const {
  std::vector<Backend*> out;
  for (const auto& b : backends_) out.push_back(b.get());
  return out;
}

std::vector<std::string> BackendRegistry::ids() const {
  std::vector<std::string> out;
  for (const auto& b : backends_) out.push_back(b->id());
  return out;
}

std::size_t BackendRegistry::total_calls() const {
  return std::accumulate(backends_.begin(), backends_.end(), std::size_t{0},
                         [](std::size_t acc, const auto& b) { return acc + b->call_count(); });
}

json BackendRegistry::to_json() const {
  json list = json::array();
  for (const auto& b : backends_) list.push_back(b->spec().to_json());
  return json{{"backends", std::move(list)}};
}

ResponseCache::ResponseCache(fs::path dir) : dir_(std::move(dir)) {
  std::error_code ec;
  fs::create_directories(dir_, ec);
  if (ec) throw Error(ErrorCode::WriteFailure, "cannot create cache dir " + dir_.string());
}

fs::path ResponseCache::path_for(const std::string& hash) const {
  return dir_ / hash.substr(0, 2) / (hash + ".json");
}

std::optional<Completion> ResponseCache::get(const std::string& hash) const {
  const fs::path path = path_for(hash);
  if (!fs::is_regular_file(path)) return std::nullopt;
  json doc = json::parse(read_text(path), nullptr, false);
  if (doc.is_discarded() || doc.value("prompt_hash", std::string()) != hash ||
      !doc.contains("raw_text") || !doc.at("raw_text").is_string()) {
    return std::nullopt;
  }
  Completion c;
  c.prompt_hash = hash;
  c.backend_id = doc.value("backend_id", std::string());
  c.contract_id = doc.value("contract_id", std::string());
  c.raw_text = doc.at("raw_text").get<std::string>();
  c.latency_ms = doc.value("latency_ms", std::int64_t{0});
  c.from_cache = true;
  return c;
}

void ResponseCache::put(const Completion& completion) {
  json doc{{"prompt_hash", completion.prompt_hash},
           {"backend_id", completion.backend_id},
           {"contract_id", completion.contract_id},
           {"raw_text", completion.raw_text},
           {"latency_ms", completion.latency_ms}};
  write_text_atomic(path_for(completion.prompt_hash), doc.dump());
}

std::unique_lock<std::mutex> ResponseCache::lock_entry(const std::string& hash) {
  std::mutex* entry = nullptr;
  {
    std::lock_guard guard(table_mutex_);
    auto& slot = entry_mutexes_[hash];
    if (!slot) slot = std::make_unique<std::mutex>();
    entry = slot.get();
  }
  return std::unique_lock(*entry);
}

Completion complete(Backend& backend, const RenderedPrompt& prompt, const GenerationParams& params,
                    const CallOptions& options) {
  params.validate();
  const std::string hash = prompt_hash(backend.spec(), prompt.text, params);

  std::unique_lock<std::mutex> entry_lock;
  if (options.cache != nullptr) {
    entry_lock = options.cache->lock_entry(hash);
    if (auto hit = options.cache->get(hash)) {
      hit->backend_id = backend.id();
      hit->contract_id = prompt.contract_id;
      return *hit;
    }
  }

  auto backoff = options.retry.initial_backoff;
  const int attempts = std::max(1, options.retry.max_attempts);
  for (int attempt = 1;; ++attempt) {
    try {
      const auto start = std::chrono::steady_clock::now();
      Completion c;
      c.raw_text = backend.generate(prompt, params);
      c.latency_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::steady_clock::now() - start)
                         .count();
      c.backend_id = backend.id();
      c.contract_id = prompt.contract_id;
      c.prompt_hash = hash;
      c.from_cache = false;
      if (options.cache != nullptr) options.cache->put(c);
      return c;
    } catch (const Error& e) {
      if (!e.retriable() || attempt >= attempts) throw;
    }
    std::this_thread::sleep_for(backoff);
    backoff = std::chrono::milliseconds(
        static_cast<std::int64_t>(static_cast<double>(backoff.count()) * options.retry.multiplier));
  }
}

std::vector<FanoutResult> fanout(std::span<Backend* const> backends,
                                 std::span<const RenderedPrompt> prompts,
                                 const GenerationParams& params, std::size_t parallelism,
                                 const CallOptions& options) {
  if (parallelism == 0) throw Error(ErrorCode::BadConfig, "parallelism must be >= 1");

  struct Item {
    Backend* backend;
    const RenderedPrompt* prompt;
  };
  std::vector<Item> items;
  items.reserve(backends.size() * prompts.size());
  for (Backend* backend : backends) {
    for (const auto& prompt : prompts) items.push_back({backend, &prompt});
  }
  std::stable_sort(items.begin(), items.end(), [](const Item& a, const Item& b) {
    if (a.backend->id() != b.backend->id()) return a.backend->id() < b.backend->id();
    return a.prompt->contract_id < b.prompt->contract_id;
  });

  std::vector<FanoutResult> results(items.size());
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next.fetch_add(1); i < items.size(); i = next.fetch_add(1)) {
      FanoutResult& out = results[i];
      out.backend_id = items[i].backend->id();
      out.contract_id = items[i].prompt->contract_id;
      try {
        out.completion = complete(*items[i].backend, *items[i].prompt, params, options);
      } catch (const Error& e) {
        out.error = e;
      } catch (const std::exception& e) {
        out.error = Error(ErrorCode::BackendRefusal, e.what());
      }
    }
  };

  const std::size_t workers = std::min(parallelism, std::max<std::size_t>(items.size(), 1));
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(worker);
  }
  return results;
}

}  // namespace scaudit
