#include "scaudit/prediction.hpp"

#include "scaudit/error.hpp"

namespace scaudit {

bool pair_less(const PairKey& a, const PairKey& b) {
  if (a.function_key != b.function_key) return a.function_key < b.function_key;
  return display_name(a.vuln_type) < display_name(b.vuln_type);
}

json RankedPrediction::to_json() const {
  json pairs = json::array();
  for (const auto& p : ranked_pairs) {
    pairs.push_back(json{{"function_key", p.key.function_key},
                         {"vuln_type", std::string(display_name(p.key.vuln_type))},
                         {"score", p.score},
                         {"description", p.description}});
  }
  return json{{"contract_id", contract_id}, {"ranked_pairs", std::move(pairs)}};
}

RankedPrediction RankedPrediction::from_json(const json& doc) {
  try {
    RankedPrediction pred;
    pred.contract_id = doc.at("contract_id").get<std::string>();
    for (const json& item : doc.at("ranked_pairs")) {
      auto type = parse_display_name(item.at("vuln_type").get<std::string>());
      if (!type) throw Error(ErrorCode::BadRunDirectory, "unknown vuln_type in prediction");
      pred.ranked_pairs.push_back(RankedPair{{item.at("function_key").get<std::string>(), *type},
                                             item.at("score").get<double>(),
                                             item.value("description", std::string())});
    }
    return pred;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadRunDirectory, std::string("prediction record: ") + e.what());
  }
}

Truth make_truth(const GroundTruthLabel& label) {
  Truth truth;
  truth.function_key = normalize_function_name(label.function_name);
  truth.vuln_type = label.vulnerability_type;
  truth.description = label.description.empty() ? std::string(display_name(label.vulnerability_type))
                                                : label.description;
  return truth;
}

TruthMap truths_from_corpus(const Corpus& corpus) {
  TruthMap truths;
  for (const auto& record : corpus.records()) {
    if (!record.labels.empty()) truths.emplace(record.id, make_truth(record.labels.front()));
  }
  return truths;
}

RankedPrediction single_model_prediction(const AuditRun& run) {
  RankedPrediction pred;
  pred.contract_id = run.contract_id;
  for (const auto& finding : dedupe(run.findings)) {
    pred.ranked_pairs.push_back(
        RankedPair{{finding.function_key, finding.vuln_type}, 1.0, finding.description});
  }
  return pred;
}

}  // namespace scaudit
