#include "scaudit/evaluation.hpp"

#include <algorithm>
#include <iomanip>
#include <set>
#include <sstream>

#include "scaudit/error.hpp"

namespace scaudit {

namespace {

std::string format_threshold(double t) {
  std::ostringstream out;
  out << t;
  return out.str();
}

std::string format_rate(double rate, int decimals) {
  std::ostringstream out;
  out << std::fixed << std::setprecision(decimals) << rate;
  return out.str();
}

std::size_t type_index(VulnType type) { return static_cast<std::size_t>(type); }

}  // namespace

void EvalConfig::validate() const {
  if (ks.empty() && thresholds.empty()) throw Error(ErrorCode::BadConfig, "nothing to evaluate");
  if (ks.empty()) throw Error(ErrorCode::BadConfig, "ks must not be empty");
  for (int k : ks) {
    if (k < 1) throw Error(ErrorCode::BadConfig, "k values must be positive");
  }
  if (!std::is_sorted(ks.begin(), ks.end())) throw Error(ErrorCode::BadConfig, "ks must be ascending");
  for (double t : thresholds) {
    if (!(t > 0.0 && t <= 1.0)) throw Error(ErrorCode::BadConfig, "thresholds must lie in (0, 1]");
  }
  if (!std::is_sorted(thresholds.begin(), thresholds.end())) {
    throw Error(ErrorCode::BadConfig, "thresholds must be ascending");
  }
  if (!direct && !cosine) throw Error(ErrorCode::BadConfig, "no match mode selected");
}

json EvalConfig::to_json() const {
  json modes = json::array();
  if (direct) modes.push_back("direct");
  if (cosine) modes.push_back("cosine");
  return json{{"ks", ks}, {"thresholds", thresholds}, {"match_modes", modes}};
}

std::string_view to_string(MetricKind kind) {
  return kind == MetricKind::TopKDirect ? "top_k_direct" : "top_k_cosine";
}

const MetricRow* MetricTable::find(std::string_view system_id, MetricKind metric, int k,
                                   std::optional<double> threshold) const {
  for (const auto& row : rows) {
    if (row.system_id == system_id && row.metric == metric && row.k == k &&
        row.threshold == threshold) {
      return &row;
    }
  }
  return nullptr;
}

std::string MetricTable::to_csv() const {
  std::ostringstream out;
  out << "system_id,metric,k,threshold,hits,n,hit_rate\n";
  for (const auto& row : rows) {
    out << row.system_id << ',' << to_string(row.metric) << ',' << row.k << ','
        << (row.threshold ? format_threshold(*row.threshold) : std::string()) << ',' << row.hits
        << ',' << row.n << ',' << format_rate(row.hit_rate(), 6) << '\n';
  }
  return out.str();
}

MetricTable MetricTable::from_csv(std::string_view text) {
  MetricTable table;
  std::istringstream in{std::string(text)};
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (header) {
      header = false;
      continue;
    }
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 7) throw Error(ErrorCode::BadRunDirectory, "malformed metrics row: " + line);
    MetricRow row;
    row.system_id = cells[0];
    if (cells[1] == "top_k_direct") {
      row.metric = MetricKind::TopKDirect;
    } else if (cells[1] == "top_k_cosine") {
      row.metric = MetricKind::TopKCosine;
    } else {
      throw Error(ErrorCode::BadRunDirectory, "unknown metric " + cells[1]);
    }
    try {
      row.k = std::stoi(cells[2]);
      if (!cells[3].empty()) row.threshold = std::stod(cells[3]);
      row.hits = std::stoul(cells[4]);
      row.n = std::stoul(cells[5]);
    } catch (const std::exception&) {
      throw Error(ErrorCode::BadRunDirectory, "malformed metrics row: " + line);
    }
    if (std::find(table.systems.begin(), table.systems.end(), row.system_id) == table.systems.end()) {
      table.systems.push_back(row.system_id);
    }
    table.rows.push_back(std::move(row));
  }
  return table;
}

std::string MetricTable::to_text() const {
  struct Line {
    std::string label;
    std::string t;
    MetricKind metric;
    int k;
    std::optional<double> threshold;
  };
  std::vector<Line> lines;
  std::set<std::pair<double, int>> cosine_keys;
  std::set<int> direct_ks;
  for (const auto& row : rows) {
    if (row.metric == MetricKind::TopKCosine) {
      cosine_keys.emplace(row.threshold.value_or(0.0), row.k);
    } else {
      direct_ks.insert(row.k);
    }
  }
  for (const auto& [t, k] : cosine_keys) {
    lines.push_back({"Top " + std::to_string(k) + " hit (cs)", format_threshold(t),
                     MetricKind::TopKCosine, k, t});
  }
  for (int k : direct_ks) {
    lines.push_back({"Top " + std::to_string(k) + " hit (direct)", "-", MetricKind::TopKDirect, k,
                     std::nullopt});
  }

  std::size_t label_width = 6;
  for (const auto& line : lines) label_width = std::max(label_width, line.label.size());
  std::vector<std::size_t> widths;
  for (const auto& system : systems) widths.push_back(std::max<std::size_t>(system.size(), 4));

  std::ostringstream out;
  out << std::left << std::setw(static_cast<int>(label_width)) << "Metric" << " | t  ";
  for (std::size_t s = 0; s < systems.size(); ++s) {
    out << " | " << std::setw(static_cast<int>(widths[s])) << systems[s];
  }
  out << '\n';
  std::size_t rule = label_width + 5;
  for (auto w : widths) rule += w + 3;
  out << std::string(rule, '-') << '\n';
  for (const auto& line : lines) {
    out << std::left << std::setw(static_cast<int>(label_width)) << line.label << " | "
        << std::setw(3) << line.t;
    for (std::size_t s = 0; s < systems.size(); ++s) {
      const MetricRow* row = find(systems[s], line.metric, line.k, line.threshold);
      out << " | " << std::setw(static_cast<int>(widths[s]))
          << (row ? format_rate(row->hit_rate(), 2) : std::string("n/a"));
    }
    out << '\n';
  }
  return out.str();
}

bool direct_hit(const RankedPrediction& prediction, const Truth& truth, int k) {
  const auto limit = std::min<std::size_t>(prediction.ranked_pairs.size(), std::max(k, 0));
  for (std::size_t r = 0; r < limit; ++r) {
    const PairKey& key = prediction.ranked_pairs[r].key;
    if (key.function_key == truth.function_key && key.vuln_type == truth.vuln_type) return true;
  }
  return false;
}

bool cosine_hit(const RankedPrediction& prediction, const Truth& truth, int k, double t,
                const SimilarityScorer& scorer) {
  const auto limit = std::min<std::size_t>(prediction.ranked_pairs.size(), std::max(k, 0));
  for (std::size_t r = 0; r < limit; ++r) {
    if (cosine(prediction.ranked_pairs[r].description, truth.description, scorer) >= t) return true;
  }
  return false;
}

MetricTable evaluate(std::span<const SystemEntry> systems, const TruthMap& truths,
                     const EvalConfig& config, const SimilarityScorer& scorer) {
  config.validate();
  MetricTable table;
  if (truths.empty()) return table;

  static const RankedPrediction kEmpty;
  for (const auto& system : systems) {
    table.systems.push_back(system.system_id);
    auto prediction_for = [&](const std::string& contract_id) -> const RankedPrediction& {
      auto it = system.predictions.find(contract_id);
      return it == system.predictions.end() ? kEmpty : it->second;
    };

    if (config.cosine) {
      for (double t : config.thresholds) {
        for (int k : config.ks) {
          MetricRow row{system.system_id, MetricKind::TopKCosine, k, t, 0, truths.size()};
          for (const auto& [contract_id, truth] : truths) {
            if (cosine_hit(prediction_for(contract_id), truth, k, t, scorer)) ++row.hits;
          }
          table.rows.push_back(std::move(row));
        }
      }
    }
    if (config.direct) {
      for (int k : config.ks) {
        MetricRow row{system.system_id, MetricKind::TopKDirect, k, std::nullopt, 0, truths.size()};
        for (const auto& [contract_id, truth] : truths) {
          if (direct_hit(prediction_for(contract_id), truth, k)) ++row.hits;
        }
        table.rows.push_back(std::move(row));
      }
    }
  }
  return table;
}

std::size_t ConfusionMatrix::total() const {
  std::size_t sum = 0;
  for (const auto& row : counts) {
    for (auto c : row) sum += c;
  }
  return sum;
}

std::size_t ConfusionMatrix::row_sum(VulnType truth) const {
  std::size_t sum = 0;
  for (auto c : counts[type_index(truth)]) sum += c;
  return sum;
}

std::size_t ConfusionMatrix::at(VulnType truth, VulnType predicted) const {
  return counts[type_index(truth)][type_index(predicted)];
}

std::size_t ConfusionMatrix::no_prediction(VulnType truth) const {
  return counts[type_index(truth)][kNoPrediction];
}

std::string ConfusionMatrix::to_csv() const {
  std::ostringstream out;
  out << "true\\predicted";
  for (VulnType type : kAllVulnTypes) out << ',' << display_name(type);
  out << ",No Prediction\n";
  for (VulnType truth : kAllVulnTypes) {
    out << display_name(truth);
    for (auto c : counts[type_index(truth)]) out << ',' << c;
    out << '\n';
  }
  return out.str();
}

ConfusionMatrix confusion(const SystemPredictions& predictions, const TruthMap& truths) {
  ConfusionMatrix matrix;
  for (const auto& [contract_id, truth] : truths) {
    auto it = predictions.find(contract_id);
    std::size_t column = ConfusionMatrix::kNoPrediction;
    if (it != predictions.end() && !it->second.ranked_pairs.empty()) {
      column = type_index(it->second.ranked_pairs.front().key.vuln_type);
    }
    ++matrix.counts[type_index(truth.vuln_type)][column];
  }
  return matrix;
}

std::string_view to_string(Scenario scenario) {
  switch (scenario) {
    case Scenario::BothWrong: return "both_wrong";
    case Scenario::SingleOnly: return "single_only";
    case Scenario::EnsembleOnly: return "ensemble_only";
    case Scenario::BothRight: return "both_right";
  }
  return "both_wrong";
}

std::map<Scenario, std::size_t> ScenarioReport::counts() const {
  std::map<Scenario, std::size_t> out{{Scenario::BothWrong, 0},
                                      {Scenario::SingleOnly, 0},
                                      {Scenario::EnsembleOnly, 0},
                                      {Scenario::BothRight, 0}};
  for (const auto& entry : entries) ++out[entry.scenario];
  return out;
}

std::string ScenarioReport::to_csv() const {
  std::ostringstream out;
  out << "contract_id,scenario,agreement,vuln_type\n";
  for (const auto& e : entries) {
    out << e.contract_id << ',' << to_string(e.scenario) << ',' << e.agreement << ','
        << display_name(e.vuln_type) << '\n';
  }
  return out.str();
}

std::string ScenarioReport::agreement_histogram_csv() const {
  std::map<std::pair<Scenario, int>, std::size_t> histogram;
  int max_agreement = model_count;
  for (const auto& e : entries) {
    ++histogram[{e.scenario, e.agreement}];
    max_agreement = std::max(max_agreement, e.agreement);
  }
  std::ostringstream out;
  out << "scenario,agreement,count\n";
  for (Scenario s : {Scenario::BothWrong, Scenario::SingleOnly, Scenario::EnsembleOnly,
                     Scenario::BothRight}) {
    for (int a = 0; a <= max_agreement; ++a) {
      auto it = histogram.find({s, a});
      out << to_string(s) << ',' << a << ',' << (it == histogram.end() ? 0 : it->second) << '\n';
    }
  }
  return out.str();
}

std::string ScenarioReport::type_histogram_csv() const {
  std::map<std::pair<Scenario, VulnType>, std::size_t> histogram;
  for (const auto& e : entries) ++histogram[{e.scenario, e.vuln_type}];
  std::ostringstream out;
  out << "scenario,vuln_type,count\n";
  for (Scenario s : {Scenario::BothWrong, Scenario::SingleOnly, Scenario::EnsembleOnly,
                     Scenario::BothRight}) {
    for (VulnType type : kPromptVulnTypes) {
      auto it = histogram.find({s, type});
      out << to_string(s) << ',' << display_name(type) << ','
          << (it == histogram.end() ? 0 : it->second) << '\n';
    }
  }
  return out.str();
}

ScenarioReport scenario_analysis(const SystemPredictions& single, const SystemPredictions& ensemble,
                                 const TruthMap& truths,
                                 const std::map<std::string, VoteMatrix>& vote_matrices, int k) {
  auto keys = [](const SystemPredictions& p) {
    std::set<std::string> out;
    for (const auto& [id, _] : p) out.insert(id);
    return out;
  };
  if (keys(single) != keys(ensemble)) {
    throw Error(ErrorCode::MismatchedContractSets,
                "single and ensemble systems cover different contracts");
  }

  ScenarioReport report;
  if (!vote_matrices.empty()) {
    report.model_count = static_cast<int>(vote_matrices.begin()->second.model_order.size());
  }
  static const RankedPrediction kEmpty;
  for (const auto& [contract_id, truth] : truths) {
    auto s_it = single.find(contract_id);
    auto e_it = ensemble.find(contract_id);
    const RankedPrediction& s_pred = s_it == single.end() ? kEmpty : s_it->second;
    const RankedPrediction& e_pred = e_it == ensemble.end() ? kEmpty : e_it->second;

    const bool single_hit = direct_hit(s_pred, truth, k);
    const bool ensemble_hit = direct_hit(e_pred, truth, k);

    ScenarioEntry entry;
    entry.contract_id = contract_id;
    entry.vuln_type = truth.vuln_type;
    entry.scenario = single_hit ? (ensemble_hit ? Scenario::BothRight : Scenario::SingleOnly)
                                : (ensemble_hit ? Scenario::EnsembleOnly : Scenario::BothWrong);

    const PairKey* focus = nullptr;
    const auto limit = std::min<std::size_t>(e_pred.ranked_pairs.size(), std::max(k, 0));
    for (std::size_t r = 0; r < limit && focus == nullptr; ++r) {
      const PairKey& key = e_pred.ranked_pairs[r].key;
      if (key.function_key == truth.function_key && key.vuln_type == truth.vuln_type) focus = &key;
    }
    if (focus == nullptr && !e_pred.ranked_pairs.empty()) focus = &e_pred.ranked_pairs.front().key;
    if (auto m = vote_matrices.find(contract_id); focus != nullptr && m != vote_matrices.end()) {
      const std::size_t j = m->second.find(*focus);
      if (j < m->second.pairs.size()) entry.agreement = m->second.column_sum(j);
    }
    report.entries.push_back(std::move(entry));
  }
  return report;
}

}  // namespace scaudit
