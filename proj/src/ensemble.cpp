#include "scaudit/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "scaudit/error.hpp"
#include "scaudit/evaluation.hpp"

namespace scaudit {

int VoteMatrix::column_sum(std::size_t pair_index) const {
  int sum = 0;
  for (const auto& row : votes) sum += row.at(pair_index);
  return sum;
}

std::size_t VoteMatrix::find(const PairKey& key) const {
  return static_cast<std::size_t>(std::find(pairs.begin(), pairs.end(), key) - pairs.begin());
}

VoteMatrix build_vote_matrix(std::string_view contract_id, std::span<const AuditRun> runs,
                             std::span<const std::string> model_order) {
  std::vector<const AuditRun*> by_model(model_order.size(), nullptr);
  for (const auto& run : runs) {
    if (run.contract_id != contract_id) {
      throw Error(ErrorCode::BadConfig, "run for " + run.contract_id + " passed for " +
                                            std::string(contract_id));
    }
    auto it = std::find(model_order.begin(), model_order.end(), run.backend_id);
    if (it == model_order.end()) {
      throw Error(ErrorCode::BadConfig, "run from unknown model " + run.backend_id);
    }
    auto& slot = by_model[static_cast<std::size_t>(it - model_order.begin())];
    if (slot != nullptr) {
      throw Error(ErrorCode::DuplicateModelRun, run.backend_id + " on " + run.contract_id);
    }
    slot = &run;
  }

  VoteMatrix matrix;
  matrix.contract_id = std::string(contract_id);
  matrix.model_order.assign(model_order.begin(), model_order.end());
  for (const AuditRun* run : by_model) {
    if (run == nullptr) continue;
    for (const auto& finding : run->findings) {
      PairKey key{finding.function_key, finding.vuln_type};
      if (matrix.find(key) == matrix.pairs.size()) matrix.pairs.push_back(std::move(key));
    }
  }

  const std::size_t width = matrix.pairs.size();
  matrix.votes.assign(model_order.size(), std::vector<std::uint8_t>(width, 0));
  matrix.descriptions.assign(model_order.size(), std::vector<std::string>(width));
  for (std::size_t i = 0; i < by_model.size(); ++i) {
    if (by_model[i] == nullptr) continue;
    for (const auto& finding : by_model[i]->findings) {
      const std::size_t j = matrix.find(PairKey{finding.function_key, finding.vuln_type});
      if (matrix.votes[i][j] == 0) {
        matrix.votes[i][j] = 1;
        matrix.descriptions[i][j] = finding.description;
      }
    }
  }
  return matrix;
}

std::string_view to_string(EnsembleMethod method) {
  return method == EnsembleMethod::Weighted ? "weighted" : "perm_opt";
}

EnsembleMethod parse_ensemble_method(std::string_view text) {
  if (text == "weighted") return EnsembleMethod::Weighted;
  if (text == "perm_opt" || text == "perm-opt") return EnsembleMethod::PermOpt;
  throw Error(ErrorCode::BadConfig, "unknown ensemble method '" + std::string(text) + "'");
}

void EnsembleConfig::validate(std::span<const std::string> model_order) const {
  if (k < 1) throw Error(ErrorCode::BadConfig, "k must be >= 1");
  if (method == EnsembleMethod::Weighted) {
    bool any_positive = false;
    for (const auto& model : model_order) {
      auto it = weights.find(model);
      if (it == weights.end()) throw Error(ErrorCode::WeightMissing, model);
      if (!std::isfinite(it->second) || it->second < 0.0) {
        throw Error(ErrorCode::BadConfig, "weight for " + model + " must be non-negative");
      }
      any_positive = any_positive || it->second > 0.0;
    }
    if (!any_positive && !model_order.empty()) {
      throw Error(ErrorCode::BadConfig, "at least one weight must be positive");
    }
  } else {
    std::set<std::string> expected(model_order.begin(), model_order.end());
    std::set<std::string> given(permutation.begin(), permutation.end());
    if (permutation.size() != model_order.size() || given != expected) {
      throw Error(ErrorCode::BadPermutation, "permutation is not a bijection over the model set");
    }
  }
}

json EnsembleConfig::to_json() const {
  json doc{{"system_id", system_id}, {"method", std::string(to_string(method))}, {"k", k}};
  if (method == EnsembleMethod::Weighted) {
    doc["weights"] = weights;
  } else {
    doc["permutation"] = permutation;
  }
  doc["provenance"] = provenance;
  return doc;
}

EnsembleConfig EnsembleConfig::from_json(const json& doc) {
  try {
    EnsembleConfig config;
    config.method = parse_ensemble_method(doc.at("method").get<std::string>());
    config.system_id = doc.value("system_id", std::string());
    if (config.system_id.empty()) config.system_id = "ensemble_" + std::string(to_string(config.method));
    config.k = doc.value("k", 5);
    if (doc.contains("weights")) config.weights = doc.at("weights").get<std::map<std::string, double>>();
    if (doc.contains("permutation")) {
      config.permutation = doc.at("permutation").get<std::vector<std::string>>();
    }
    config.provenance = doc.value("provenance", json::object());
    return config;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("ensemble config: ") + e.what());
  }
}

RankedPrediction weighted_vote(const VoteMatrix& matrix, const EnsembleConfig& config) {
  config.validate(matrix.model_order);
  const std::size_t models = matrix.model_order.size();

  struct Scored {
    std::size_t pair;
    double score;
    std::size_t voter;  // highest-weight voter
  };
  std::vector<Scored> scored;
  for (std::size_t j = 0; j < matrix.pairs.size(); ++j) {
    Scored s{j, 0.0, models};
    for (std::size_t i = 0; i < models; ++i) {
      if (matrix.votes[i][j] == 0) continue;
      const double w = config.weights.at(matrix.model_order[i]);
      s.score += w;
      if (s.voter == models || w > config.weights.at(matrix.model_order[s.voter])) s.voter = i;
    }
    scored.push_back(s);
  }
  // Scores within the tolerance share a tie class.
  double total = 0.0;
  for (const auto& model : matrix.model_order) total += config.weights.at(model);
  const double tolerance = kScoreTieTolerance * total;
  std::sort(scored.begin(), scored.end(), [](const Scored& a, const Scored& b) { return a.score > b.score; });
  std::vector<std::size_t> tie_class(matrix.pairs.size());
  for (std::size_t r = 0, cls = 0; r < scored.size(); ++r) {
    if (r > 0 && scored[r - 1].score - scored[r].score > tolerance) ++cls;
    tie_class[scored[r].pair] = cls;
  }
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (tie_class[a.pair] != tie_class[b.pair]) return tie_class[a.pair] < tie_class[b.pair];
    return pair_less(matrix.pairs[a.pair], matrix.pairs[b.pair]);
  });

  RankedPrediction pred;
  pred.contract_id = matrix.contract_id;
  for (std::size_t r = 0; r < scored.size() && r < static_cast<std::size_t>(config.k); ++r) {
    const Scored& s = scored[r];
    pred.ranked_pairs.push_back(
        RankedPair{matrix.pairs[s.pair], s.score, matrix.descriptions[s.voter][s.pair]});
  }
  return pred;
}

RankedPrediction perm_opt_vote(const VoteMatrix& matrix, const EnsembleConfig& config) {
  config.validate(matrix.model_order);
  const std::size_t models = matrix.model_order.size();
  std::vector<std::size_t> rank(models);
  for (std::size_t i = 0; i < models; ++i) {
    rank[i] = static_cast<std::size_t>(
        std::find(config.permutation.begin(), config.permutation.end(), matrix.model_order[i]) -
        config.permutation.begin());
  }

  struct Scored {
    std::size_t pair;
    int votes;
    std::size_t earliest_rank;
    std::size_t voter;
  };
  std::vector<Scored> scored;
  for (std::size_t j = 0; j < matrix.pairs.size(); ++j) {
    Scored s{j, 0, models, models};
    for (std::size_t i = 0; i < models; ++i) {
      if (matrix.votes[i][j] == 0) continue;
      ++s.votes;
      if (rank[i] < s.earliest_rank) {
        s.earliest_rank = rank[i];
        s.voter = i;
      }
    }
    scored.push_back(s);
  }
  std::sort(scored.begin(), scored.end(), [&](const Scored& a, const Scored& b) {
    if (a.votes != b.votes) return a.votes > b.votes;
    if (a.earliest_rank != b.earliest_rank) return a.earliest_rank < b.earliest_rank;
    return pair_less(matrix.pairs[a.pair], matrix.pairs[b.pair]);
  });

  RankedPrediction pred;
  pred.contract_id = matrix.contract_id;
  for (std::size_t r = 0; r < scored.size() && r < static_cast<std::size_t>(config.k); ++r) {
    const Scored& s = scored[r];
    pred.ranked_pairs.push_back(RankedPair{matrix.pairs[s.pair], static_cast<double>(s.votes),
                                           matrix.descriptions[s.voter][s.pair]});
  }
  return pred;
}

RankedPrediction ensemble_vote(const VoteMatrix& matrix, const EnsembleConfig& config) {
  return config.method == EnsembleMethod::Weighted ? weighted_vote(matrix, config)
                                                   : perm_opt_vote(matrix, config);
}

RunsByContract group_runs(std::span<const AuditRun> runs) {
  RunsByContract grouped;
  for (const auto& run : runs) grouped[run.contract_id].push_back(run);
  return grouped;
}

namespace {

const std::vector<AuditRun>& runs_for(const RunsByContract& runs, const std::string& contract_id) {
  static const std::vector<AuditRun> kNone;
  auto it = runs.find(contract_id);
  return it == runs.end() ? kNone : it->second;
}

}  // namespace

std::map<std::string, double> learn_weights(const RunsByContract& runs, const TruthMap& truths,
                                            std::span<const std::string> model_order, int k) {
  if (truths.empty()) throw Error(ErrorCode::EmptyValidation, "no validation contracts");
  if (model_order.empty()) throw Error(ErrorCode::BadConfig, "no models");

  std::map<std::string, double> weights;
  for (const auto& model : model_order) {
    std::size_t hits = 0;
    for (const auto& [contract_id, truth] : truths) {
      for (const auto& run : runs_for(runs, contract_id)) {
        if (run.backend_id == model && direct_hit(single_model_prediction(run), truth, k)) ++hits;
      }
    }
    weights[model] = static_cast<double>(hits) / static_cast<double>(truths.size());
  }

  const bool all_zero = std::all_of(weights.begin(), weights.end(),
                                    [](const auto& entry) { return entry.second == 0.0; });
  if (all_zero || model_order.size() == 1) {
    for (auto& [_, w] : weights) w = 1.0 / static_cast<double>(model_order.size());
  }
  return weights;
}

double ensemble_hit_rate(const RunsByContract& runs, const TruthMap& truths,
                         std::span<const std::string> model_order, const EnsembleConfig& config) {
  if (truths.empty()) throw Error(ErrorCode::EmptyValidation, "no validation contracts");
  std::size_t hits = 0;
  for (const auto& [contract_id, truth] : truths) {
    VoteMatrix matrix = build_vote_matrix(contract_id, runs_for(runs, contract_id), model_order);
    if (direct_hit(ensemble_vote(matrix, config), truth, config.k)) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(truths.size());
}

PermutationSearch optimize_permutation(const RunsByContract& runs, const TruthMap& truths,
                                       std::span<const std::string> model_order, int k) {
  if (model_order.size() > kMaxPermutationModels) {
    throw Error(ErrorCode::TooManyModels, std::to_string(model_order.size()) + " models exceed " +
                                              std::to_string(kMaxPermutationModels));
  }
  if (model_order.empty()) throw Error(ErrorCode::BadConfig, "no models");
  if (truths.empty()) throw Error(ErrorCode::EmptyValidation, "no validation contracts");

  std::vector<VoteMatrix> matrices;
  std::vector<const Truth*> contract_truths;
  for (const auto& [contract_id, truth] : truths) {
    matrices.push_back(build_vote_matrix(contract_id, runs_for(runs, contract_id), model_order));
    contract_truths.push_back(&truth);
  }

  EnsembleConfig config;
  config.method = EnsembleMethod::PermOpt;
  config.k = k;

  std::vector<std::size_t> order(model_order.size());
  std::iota(order.begin(), order.end(), 0);

  PermutationSearch best;
  std::size_t best_hits = 0;
  bool have_best = false;
  do {
    config.permutation.clear();
    for (std::size_t idx : order) config.permutation.push_back(model_order[idx]);
    std::size_t hits = 0;
    for (std::size_t c = 0; c < matrices.size(); ++c) {
      if (direct_hit(perm_opt_vote(matrices[c], config), *contract_truths[c], k)) ++hits;
    }
    ++best.candidates_evaluated;
    if (!have_best || hits > best_hits) {
      have_best = true;
      best_hits = hits;
      best.permutation = config.permutation;
    }
  } while (std::next_permutation(order.begin(), order.end()));

  best.hit_rate = static_cast<double>(best_hits) / static_cast<double>(matrices.size());
  return best;
}

}  // namespace scaudit
