#include "support.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>
#include <tuple>
#include <unistd.h>

namespace scaudit::testing {

fs::path fixture_dir() { return SCAUDIT_FIXTURE_DIR; }
fs::path asset_dir() { return SCAUDIT_ASSET_DIR; }
fs::path golden_dir() { return SCAUDIT_GOLDEN_DIR; }

fs::path scratch_dir(const std::string& name) {
  fs::path dir = fs::temp_directory_path() / ("scaudit_" + std::to_string(::getpid()) + "_" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

VoteInstance random_instance(std::mt19937_64& rng, std::size_t max_models, std::size_t max_pairs) {
  static const std::vector<std::string> functions{"transfer", "approve", "mint", "withdraw"};
  auto pick = [&](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

  const std::size_t models = 1 + pick(max_models);
  const std::size_t pool_size = 1 + pick(max_pairs);
  std::vector<PairKey> pool;
  while (pool.size() < pool_size) {
    PairKey key{functions[pick(functions.size())], kPromptVulnTypes[pick(kPromptVulnTypes.size())]};
    if (std::find(pool.begin(), pool.end(), key) == pool.end()) pool.push_back(key);
  }

  std::vector<std::string> model_order;
  for (std::size_t i = 0; i < models; ++i) model_order.push_back("m" + std::to_string(i));

  std::vector<AuditRun> runs;
  for (std::size_t i = 0; i < models; ++i) {
    if (pick(8) == 0) continue;  // model with no run at all
    AuditRun run{model_order[i], "c", ParseStatus::Parsed, {}, "h"};
    std::vector<PairKey> chosen = pool;
    std::shuffle(chosen.begin(), chosen.end(), rng);
    chosen.resize(pick(pool.size() + 1));
    for (const auto& key : chosen) {
      run.findings.push_back({key.function_key, key.vuln_type, "d" + std::to_string(i) + key.function_key});
    }
    if (run.findings.empty()) run.status = ParseStatus::Empty;
    runs.push_back(std::move(run));
  }

  VoteInstance inst;
  inst.matrix = build_vote_matrix("c", runs, model_order);
  const int k = static_cast<int>(1 + pick(8));

  inst.weighted.method = EnsembleMethod::Weighted;
  inst.weighted.k = k;
  const bool grid = pick(2) == 0;
  static const double kGrid[] = {0.0, 0.5, 1.0, 1.5, 2.0};
  double total = 0.0;
  for (const auto& m : model_order) {
    const double w = grid ? kGrid[pick(5)] : std::uniform_real_distribution<double>(0.01, 1.0)(rng);
    inst.weighted.weights[m] = w;
    total += w;
  }
  if (total == 0.0) inst.weighted.weights[model_order.front()] = 1.0;

  inst.perm_opt.method = EnsembleMethod::PermOpt;
  inst.perm_opt.k = k;
  inst.perm_opt.permutation = model_order;
  std::shuffle(inst.perm_opt.permutation.begin(), inst.perm_opt.permutation.end(), rng);
  return inst;
}

namespace {

std::tuple<std::string, std::string> lex_key(const PairKey& key) {
  return {key.function_key, std::string(display_name(key.vuln_type))};
}

// Selection by "nobody beats me": O(n^2) per slot, independent of std::sort.
template <class Beats>
std::vector<std::size_t> select_order(std::size_t n, Beats beats) {
  std::vector<std::size_t> order;
  std::vector<bool> used(n, false);
  for (std::size_t slot = 0; slot < n; ++slot) {
    for (std::size_t p = 0; p < n; ++p) {
      if (used[p]) continue;
      bool beaten = false;
      for (std::size_t q = 0; q < n && !beaten; ++q) beaten = !used[q] && q != p && beats(q, p);
      if (!beaten) {
        order.push_back(p);
        used[p] = true;
        break;
      }
    }
  }
  return order;
}

}  // namespace

RankedPrediction oracle_weighted(const VoteMatrix& m, const EnsembleConfig& config) {
  const std::size_t n = m.pairs.size();
  std::vector<double> score(n, 0.0);
  double total = 0.0;
  for (const auto& model : m.model_order) total += config.weights.at(model);
  for (std::size_t j = 0; j < n; ++j) {
    for (std::size_t i = 0; i < m.model_order.size(); ++i) {
      if (m.votes[i][j]) score[j] += config.weights.at(m.model_order[i]);
    }
  }
  const double tol = 1e-9 * total;
  auto order = select_order(n, [&](std::size_t q, std::size_t p) {
    if (score[q] > score[p] + tol) return true;
    if (std::abs(score[q] - score[p]) <= tol) return lex_key(m.pairs[q]) < lex_key(m.pairs[p]);
    return false;
  });

  RankedPrediction out;
  out.contract_id = m.contract_id;
  for (std::size_t r = 0; r < order.size() && r < static_cast<std::size_t>(config.k); ++r) {
    const std::size_t j = order[r];
    double best = -1.0;
    std::string description;
    for (std::size_t i = 0; i < m.model_order.size(); ++i) {
      const double w = config.weights.at(m.model_order[i]);
      if (m.votes[i][j] && w > best) {
        best = w;
        description = m.descriptions[i][j];
      }
    }
    out.ranked_pairs.push_back({m.pairs[j], score[j], description});
  }
  return out;
}

RankedPrediction oracle_perm_opt(const VoteMatrix& m, const EnsembleConfig& config) {
  const std::size_t n = m.pairs.size();
  std::vector<int> votes(n, 0);
  std::vector<std::size_t> first_rank(n, SIZE_MAX);
  std::vector<std::string> description(n);
  for (std::size_t rank = 0; rank < config.permutation.size(); ++rank) {
    const std::size_t i = static_cast<std::size_t>(
        std::find(m.model_order.begin(), m.model_order.end(), config.permutation[rank]) - m.model_order.begin());
    for (std::size_t j = 0; j < n; ++j) {
      if (!m.votes[i][j]) continue;
      ++votes[j];
      if (first_rank[j] == SIZE_MAX) {
        first_rank[j] = rank;
        description[j] = m.descriptions[i][j];
      }
    }
  }
  auto order = select_order(n, [&](std::size_t q, std::size_t p) {
    return std::make_tuple(-votes[q], first_rank[q], lex_key(m.pairs[q])) <
           std::make_tuple(-votes[p], first_rank[p], lex_key(m.pairs[p]));
  });
  RankedPrediction out;
  out.contract_id = m.contract_id;
  for (std::size_t r = 0; r < order.size() && r < static_cast<std::size_t>(config.k); ++r) {
    const std::size_t j = order[r];
    out.ranked_pairs.push_back({m.pairs[j], static_cast<double>(votes[j]), description[j]});
  }
  return out;
}

std::string compare_predictions(const RankedPrediction& got, const RankedPrediction& want,
                                double score_tolerance) {
  if (got.ranked_pairs.size() != want.ranked_pairs.size()) {
    return "length " + std::to_string(got.ranked_pairs.size()) + " vs " + std::to_string(want.ranked_pairs.size());
  }
  for (std::size_t r = 0; r < got.ranked_pairs.size(); ++r) {
    const auto& g = got.ranked_pairs[r];
    const auto& w = want.ranked_pairs[r];
    if (!(g.key == w.key)) {
      return "rank " + std::to_string(r) + ": " + g.key.function_key + "/" + std::string(display_name(g.key.vuln_type)) +
             " vs " + w.key.function_key + "/" + std::string(display_name(w.key.vuln_type));
    }
    if (std::abs(g.score - w.score) > score_tolerance) return "rank " + std::to_string(r) + ": score differs";
    if (g.description != w.description) return "rank " + std::to_string(r) + ": description differs";
  }
  return {};
}

EvalSummary run_replay_pipeline(const fs::path& run_dir) {
  const fs::path fixture = fixture_dir() / "replay";
  AuditOptions audit;
  audit.corpus = CorpusLocation{fixture / "manifest.jsonl", {}};
  audit.out_dir = run_dir;
  audit.retry.initial_backoff = std::chrono::milliseconds(0);
  audit.asset_dir = asset_dir();
  BackendRegistry registry = BackendRegistry::load(fixture / "backends.json");
  run_audit(audit, registry);

  OptimizeOptions optimize;
  optimize.run_dir = run_dir;
  optimize.split = CorpusSplit::from_json(read_json_file(fixture / "split.json"));
  run_optimize(optimize);

  run_ensemble(EnsembleOptions{run_dir, {}});

  EvalOptions eval;
  eval.run_dir = run_dir;
  return run_eval(eval);
}

std::vector<std::string> golden_mismatches(const fs::path& run_dir, const fs::path& golden) {
  std::vector<std::string> problems;
  for (const auto& entry : fs::recursive_directory_iterator(golden)) {
    if (!entry.is_regular_file()) continue;
    const fs::path rel = fs::relative(entry.path(), golden);
    const fs::path produced = run_dir / rel;
    if (!fs::exists(produced)) {
      problems.push_back("missing " + rel.string());
    } else if (slurp(produced) != slurp(entry.path())) {
      problems.push_back("differs " + rel.string());
    }
  }
  for (const auto& entry : fs::directory_iterator(run_dir / run_layout::kReportsDir)) {
    const fs::path rel = fs::relative(entry.path(), run_dir);
    if (!fs::exists(golden / rel)) problems.push_back("unexpected " + rel.string());
  }
  return problems;
}

}  // namespace scaudit::testing
