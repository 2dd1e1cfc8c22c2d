#pragma once

#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scaudit/parsing.hpp"
#include "scaudit/prediction.hpp"

namespace scaudit {

// Incidence of models (rows, in model_order) over the pairs any of them proposed.
struct VoteMatrix {
  std::string contract_id;
  std::vector<PairKey> pairs;
  std::vector<std::string> model_order;
  std::vector<std::vector<std::uint8_t>> votes;
  // Reason text model i gave for pair j; empty where v_ij = 0.
  std::vector<std::vector<std::string>> descriptions;

  int column_sum(std::size_t pair_index) const;
  // Index of `key` in pairs, or pairs.size().
  std::size_t find(const PairKey& key) const;
};

// Pairs appear in first-seen order scanning models in model_order. Models
// without a run contribute an all-zero row.
VoteMatrix build_vote_matrix(std::string_view contract_id, std::span<const AuditRun> runs,
                             std::span<const std::string> model_order);

enum class EnsembleMethod { Weighted, PermOpt };

std::string_view to_string(EnsembleMethod method);
EnsembleMethod parse_ensemble_method(std::string_view text);

struct EnsembleConfig {
  std::string system_id;
  EnsembleMethod method = EnsembleMethod::Weighted;
  std::map<std::string, double> weights;
  // Priority order, rank 0 first.
  std::vector<std::string> permutation;
  int k = 5;
  json provenance = json::object();

  void validate(std::span<const std::string> model_order) const;
  json to_json() const;
  static EnsembleConfig from_json(const json& doc);
};

// Relative to the total weight; closer scores tie.
inline constexpr double kScoreTieTolerance = 1e-9;

// Score_j = sum_i w_i * v_ij; ties broken lexicographically on the pair;
// description from the highest-weight voter.
RankedPrediction weighted_vote(const VoteMatrix& matrix, const EnsembleConfig& config);

// Score_j = sum_i v_ij; ties broken by the best-ranked voter, then
// lexicographically; description from that voter.
RankedPrediction perm_opt_vote(const VoteMatrix& matrix, const EnsembleConfig& config);

RankedPrediction ensemble_vote(const VoteMatrix& matrix, const EnsembleConfig& config);

using RunsByContract = std::map<std::string, std::vector<AuditRun>>;

RunsByContract group_runs(std::span<const AuditRun> runs);

// Per-model top-k direct hit rate over the contracts in `truths`. All-zero
// rates fall back to uniform 1/|M|; a single model always gets weight 1.
std::map<std::string, double> learn_weights(const RunsByContract& runs, const TruthMap& truths,
                                            std::span<const std::string> model_order, int k);

struct PermutationSearch {
  std::vector<std::string> permutation;
  double hit_rate = 0.0;
  std::size_t candidates_evaluated = 0;
};

inline constexpr std::size_t kMaxPermutationModels = 8;

// Exhaustive search over all |M|! priority orders, enumerated in lexicographic
// order of model_order indices; the first strict maximum wins.
PermutationSearch optimize_permutation(const RunsByContract& runs, const TruthMap& truths,
                                       std::span<const std::string> model_order, int k);

// Top-k direct hit rate of one ensemble configuration over `truths`.
double ensemble_hit_rate(const RunsByContract& runs, const TruthMap& truths,
                         std::span<const std::string> model_order, const EnsembleConfig& config);

}  // namespace scaudit
