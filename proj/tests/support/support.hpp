#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "scaudit/ensemble.hpp"
#include "scaudit/pipeline.hpp"

namespace scaudit::testing {

fs::path fixture_dir();
fs::path asset_dir();
fs::path golden_dir();

// Fresh, empty directory under the system temp dir.
fs::path scratch_dir(const std::string& name);

// Random vote instance: |M| <= max_models, at most max_pairs distinct pairs.
struct VoteInstance {
  VoteMatrix matrix;
  EnsembleConfig weighted;
  EnsembleConfig perm_opt;
};

VoteInstance random_instance(std::mt19937_64& rng, std::size_t max_models = 4, std::size_t max_pairs = 8);

// Straightforward reimplementations used as oracles.
RankedPrediction oracle_weighted(const VoteMatrix& matrix, const EnsembleConfig& config);
RankedPrediction oracle_perm_opt(const VoteMatrix& matrix, const EnsembleConfig& config);

// Empty string when equal, else a description of the first difference.
std::string compare_predictions(const RankedPrediction& got, const RankedPrediction& want,
                                double score_tolerance);

// audit -> optimize -> ensemble -> eval on the replay fixture.
EvalSummary run_replay_pipeline(const fs::path& run_dir);

// Files under `golden` (relative paths) that are missing or differ in `run_dir`,
// plus report files the golden set lacks.
std::vector<std::string> golden_mismatches(const fs::path& run_dir, const fs::path& golden);

std::string slurp(const fs::path& path);

}  // namespace scaudit::testing
