#pragma once

#include <map>
#include <mutex>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace scaudit {

// Lowercase, split on non-alphanumerics, duplicates kept.
std::vector<std::string> tokenize(std::string_view text);

// score() is symmetric, lies in [0, 1], and is 1 for any text with at least one token.
class SimilarityScorer {
 public:
  virtual ~SimilarityScorer() = default;
  virtual double score(std::string_view a, std::string_view b) const = 0;
  virtual std::string kind() const = 0;
};

class TfIdfScorer final : public SimilarityScorer {
 public:
  // Smoothed idf: ln((1 + N) / (1 + df)) + 1.
  static TfIdfScorer fit(std::span<const std::string> documents);
  // Plain term-frequency vectors (every idf = 1).
  static TfIdfScorer term_frequency();

  double score(std::string_view a, std::string_view b) const override;
  std::string kind() const override { return "tfidf_cosine"; }

  double idf(const std::string& term) const;
  std::size_t document_count() const { return documents_; }

 private:
  std::map<std::string, double> weigh(std::string_view text) const;

  bool use_idf_ = false;
  std::size_t documents_ = 0;
  std::map<std::string, std::size_t, std::less<>> document_frequency_;
};

// Posts {"texts": [...]} to an embedding endpoint and expects
// {"embeddings": [[...], ...]} of unit-norm vectors back.
class EmbeddingServiceScorer final : public SimilarityScorer {
 public:
  explicit EmbeddingServiceScorer(std::string endpoint, int timeout_seconds = 60);

  double score(std::string_view a, std::string_view b) const override;
  std::string kind() const override { return "embedding_service"; }

  std::vector<std::vector<double>> embed(const std::vector<std::string>& texts) const;

 private:
  std::string endpoint_;
  int timeout_seconds_;
  mutable std::mutex cache_mutex_;
  mutable std::map<std::string, std::vector<double>, std::less<>> cache_;
};

double cosine(std::string_view a, std::string_view b, const SimilarityScorer& scorer);

}  // namespace scaudit
