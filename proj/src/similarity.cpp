#include "scaudit/similarity.hpp"

#include <httplib.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <set>

#include "scaudit/error.hpp"
#include "scaudit/jsonl.hpp"

namespace scaudit {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      current += static_cast<char>(std::tolower(c));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

namespace {

double clamp_unit(double x) {
  if (!(x > 0.0)) return 0.0;
  return std::min(x, 1.0);
}

// Iterating both maps in key order makes the result independent of argument order.
double sparse_cosine(const std::map<std::string, double>& a, const std::map<std::string, double>& b) {
  if (a.empty() || b.empty()) return 0.0;
  double dot = 0.0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      dot += ia->second * ib->second;
      ++ia;
      ++ib;
    }
  }
  double na = 0.0;
  double nb = 0.0;
  for (const auto& [_, w] : a) na += w * w;
  for (const auto& [_, w] : b) nb += w * w;
  if (na == 0.0 || nb == 0.0) return 0.0;
  if (a == b) return 1.0;
  return clamp_unit(dot / (std::sqrt(na) * std::sqrt(nb)));
}

}  // namespace

TfIdfScorer TfIdfScorer::fit(std::span<const std::string> documents) {
  TfIdfScorer scorer;
  scorer.use_idf_ = true;
  scorer.documents_ = documents.size();
  for (const auto& doc : documents) {
    auto tokens = tokenize(doc);
    std::set<std::string> unique(tokens.begin(), tokens.end());
    for (const auto& term : unique) ++scorer.document_frequency_[term];
  }
  return scorer;
}

TfIdfScorer TfIdfScorer::term_frequency() { return TfIdfScorer{}; }

double TfIdfScorer::idf(const std::string& term) const {
  if (!use_idf_) return 1.0;
  auto it = document_frequency_.find(term);
  const double df = it == document_frequency_.end() ? 0.0 : static_cast<double>(it->second);
  return std::log((1.0 + static_cast<double>(documents_)) / (1.0 + df)) + 1.0;
}

std::map<std::string, double> TfIdfScorer::weigh(std::string_view text) const {
  std::map<std::string, double> tf;
  for (auto& token : tokenize(text)) tf[std::move(token)] += 1.0;
  for (auto& [term, w] : tf) w *= idf(term);
  return tf;
}

double TfIdfScorer::score(std::string_view a, std::string_view b) const {
  return sparse_cosine(weigh(a), weigh(b));
}

EmbeddingServiceScorer::EmbeddingServiceScorer(std::string endpoint, int timeout_seconds)
    : endpoint_(std::move(endpoint)), timeout_seconds_(timeout_seconds) {}

std::vector<std::vector<double>> EmbeddingServiceScorer::embed(const std::vector<std::string>& texts) const {
  const auto scheme_end = endpoint_.find("://");
  const auto path_start = endpoint_.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string origin = endpoint_.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : endpoint_.substr(path_start);

  httplib::Client client(origin);
  client.set_read_timeout(timeout_seconds_, 0);
  auto response = client.Post(path, json{{"texts", texts}}.dump(), "application/json");
  if (!response) {
    throw Error(ErrorCode::EmbeddingServiceError, httplib::to_string(response.error()));
  }
  if (response->status < 200 || response->status >= 300) {
    throw Error(ErrorCode::EmbeddingServiceError, "HTTP " + std::to_string(response->status));
  }
  json reply = json::parse(response->body, nullptr, false);
  if (reply.is_discarded() || !reply.contains("embeddings") || !reply["embeddings"].is_array() ||
      reply["embeddings"].size() != texts.size()) {
    throw Error(ErrorCode::EmbeddingServiceError, "malformed embedding response");
  }
  try {
    return reply["embeddings"].get<std::vector<std::vector<double>>>();
  } catch (const json::exception& e) {
    throw Error(ErrorCode::EmbeddingServiceError, e.what());
  }
}

double EmbeddingServiceScorer::score(std::string_view a, std::string_view b) const {
  if (tokenize(a).empty() || tokenize(b).empty()) return 0.0;
  std::vector<std::string> missing;
  {
    std::lock_guard lock(cache_mutex_);
    for (std::string_view text : {a, b}) {
      if (!cache_.contains(text) &&
          std::find(missing.begin(), missing.end(), text) == missing.end()) {
        missing.emplace_back(text);
      }
    }
  }
  if (!missing.empty()) {
    auto vectors = embed(missing);
    std::lock_guard lock(cache_mutex_);
    for (std::size_t i = 0; i < missing.size(); ++i) cache_[missing[i]] = std::move(vectors[i]);
  }

  std::lock_guard lock(cache_mutex_);
  const auto& va = cache_.find(a)->second;
  const auto& vb = cache_.find(b)->second;
  if (va.size() != vb.size() || va.empty()) {
    throw Error(ErrorCode::EmbeddingServiceError, "embedding dimensions disagree");
  }
  if (a == b) return 1.0;
  double dot = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < va.size(); ++i) {
    dot += va[i] * vb[i];
    na += va[i] * va[i];
    nb += vb[i] * vb[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return clamp_unit(dot / (std::sqrt(na) * std::sqrt(nb)));
}

double cosine(std::string_view a, std::string_view b, const SimilarityScorer& scorer) {
  return scorer.score(a, b);
}

}  // namespace scaudit
