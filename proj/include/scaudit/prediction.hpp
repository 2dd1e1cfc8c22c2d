#pragma once

#include <map>
#include <string>
#include <vector>

#include "scaudit/corpus.hpp"
#include "scaudit/jsonl.hpp"
#include "scaudit/parsing.hpp"
#include "scaudit/taxonomy.hpp"

namespace scaudit {

// The (function, vulnerability type) atom votes are counted over.
struct PairKey {
  std::string function_key;
  VulnType vuln_type = VulnType::Other;

  bool operator==(const PairKey&) const = default;
};

// Lexicographic on (function_key, display name of vuln_type).
bool pair_less(const PairKey& a, const PairKey& b);

struct RankedPair {
  PairKey key;
  double score = 0.0;
  std::string description;
};

struct RankedPrediction {
  std::string contract_id;
  std::vector<RankedPair> ranked_pairs;

  json to_json() const;
  static RankedPrediction from_json(const json& doc);
};

// Ground truth normalized the same way predictions are.
struct Truth {
  std::string function_key;
  VulnType vuln_type = VulnType::Other;
  // Label description, or the type's display name when the label has none.
  std::string description;
};

using TruthMap = std::map<std::string, Truth>;

Truth make_truth(const GroundTruthLabel& label);

// Truths for every record carrying at least one label (the first label is used).
TruthMap truths_from_corpus(const Corpus& corpus);

// A model's own findings, in emitted order, each with score 1.
RankedPrediction single_model_prediction(const AuditRun& run);

}  // namespace scaudit
