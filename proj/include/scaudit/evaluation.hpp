#pragma once

#include <array>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scaudit/ensemble.hpp"
#include "scaudit/prediction.hpp"
#include "scaudit/similarity.hpp"

namespace scaudit {

struct EvalConfig {
  std::vector<int> ks{1, 5};
  std::vector<double> thresholds{0.5, 0.7, 0.9};
  bool direct = true;
  bool cosine = true;

  // Throws BadConfig.
  void validate() const;
  json to_json() const;
};

enum class MetricKind { TopKDirect, TopKCosine };

std::string_view to_string(MetricKind kind);

struct MetricRow {
  std::string system_id;
  MetricKind metric = MetricKind::TopKDirect;
  int k = 1;
  std::optional<double> threshold;
  std::size_t hits = 0;
  std::size_t n = 0;

  double hit_rate() const { return n == 0 ? 0.0 : static_cast<double>(hits) / static_cast<double>(n); }
};

struct MetricTable {
  std::vector<MetricRow> rows;
  // Systems in column order.
  std::vector<std::string> systems;

  const MetricRow* find(std::string_view system_id, MetricKind metric, int k,
                        std::optional<double> threshold = std::nullopt) const;

  // system_id,metric,k,threshold,hits,n,hit_rate
  std::string to_csv() const;
  static MetricTable from_csv(std::string_view text);

  // One row per (metric, t, k), one column per system; cosine rows first,
  // direct rows last.
  std::string to_text() const;
};

// True iff some pair among the top k matches both function_key and vuln_type.
bool direct_hit(const RankedPrediction& prediction, const Truth& truth, int k);

// True iff some pair among the top k has description similarity >= t.
bool cosine_hit(const RankedPrediction& prediction, const Truth& truth, int k, double t,
                const SimilarityScorer& scorer);

using SystemPredictions = std::map<std::string, RankedPrediction>;

struct SystemEntry {
  std::string system_id;
  SystemPredictions predictions;
};

// Contracts are the keys of `truths`; a missing prediction counts as a miss.
MetricTable evaluate(std::span<const SystemEntry> systems, const TruthMap& truths,
                     const EvalConfig& config, const SimilarityScorer& scorer);

// Rows are true types, columns predicted types plus NoPrediction.
struct ConfusionMatrix {
  static constexpr std::size_t kRows = 7;
  static constexpr std::size_t kCols = 8;
  static constexpr std::size_t kNoPrediction = 7;

  std::array<std::array<std::size_t, kCols>, kRows> counts{};

  std::size_t total() const;
  std::size_t row_sum(VulnType truth) const;
  std::size_t at(VulnType truth, VulnType predicted) const;
  std::size_t no_prediction(VulnType truth) const;
  std::string to_csv() const;
};

// Uses each contract's top-1 pair.
ConfusionMatrix confusion(const SystemPredictions& predictions, const TruthMap& truths);

enum class Scenario { BothWrong, SingleOnly, EnsembleOnly, BothRight };

std::string_view to_string(Scenario scenario);

struct ScenarioEntry {
  std::string contract_id;
  Scenario scenario = Scenario::BothWrong;
  int agreement = 0;
  VulnType vuln_type = VulnType::Other;
};

struct ScenarioReport {
  std::vector<ScenarioEntry> entries;
  int model_count = 0;

  std::map<Scenario, std::size_t> counts() const;
  // contract_id,scenario,agreement,vuln_type
  std::string to_csv() const;
  // scenario,agreement,count for every agreement level 0..|M|
  std::string agreement_histogram_csv() const;
  // scenario,vuln_type,count
  std::string type_histogram_csv() const;
};

// Scenario per contract from top-k direct hits of both systems; agreement is
// the column sum of the ensemble's matched pair, else of its top-1 pair.
ScenarioReport scenario_analysis(const SystemPredictions& single, const SystemPredictions& ensemble,
                                 const TruthMap& truths,
                                 const std::map<std::string, VoteMatrix>& vote_matrices, int k);

}  // namespace scaudit
