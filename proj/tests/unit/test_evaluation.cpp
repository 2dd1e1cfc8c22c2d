#include <gtest/gtest.h>

#include <random>

#include "scaudit/error.hpp"
#include "scaudit/evaluation.hpp"

using namespace scaudit;

namespace {

RankedPrediction ranked(const std::string& id, std::vector<std::pair<std::string, VulnType>> pairs,
                        std::vector<std::string> descriptions = {}) {
  RankedPrediction p;
  p.contract_id = id;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    p.ranked_pairs.push_back({{pairs[i].first, pairs[i].second}, 1.0, i < descriptions.size() ? descriptions[i] : ""});
  }
  return p;
}

const Truth kTransfer{"transfer", VulnType::IntegerOverflow, "unchecked add overflows balance"};

}  // namespace

TEST(DirectHit, RankBoundary) {
  auto top = ranked("c", {{"transfer", VulnType::IntegerOverflow}});
  EXPECT_TRUE(direct_hit(top, kTransfer, 1));
  auto fourth = ranked("c", {{"a", VulnType::WrongLogic},
                             {"b", VulnType::WrongLogic},
                             {"transfer", VulnType::WrongLogic},
                             {"transfer", VulnType::IntegerOverflow}});
  EXPECT_FALSE(direct_hit(fourth, kTransfer, 1));
  EXPECT_FALSE(direct_hit(fourth, kTransfer, 3));
  EXPECT_TRUE(direct_hit(fourth, kTransfer, 5));
  EXPECT_FALSE(direct_hit(RankedPrediction{}, kTransfer, 5));
}

TEST(CosineHit, ThresholdsAndIdentity) {
  TfIdfScorer tf = TfIdfScorer::term_frequency();
  auto same = ranked("c", {{"x", VulnType::Other}}, {kTransfer.description});
  EXPECT_TRUE(cosine_hit(same, kTransfer, 1, 1.0, tf));
  auto disjoint = ranked("c", {{"x", VulnType::Other}}, {"owner check missing"});
  EXPECT_FALSE(cosine_hit(disjoint, kTransfer, 1, 0.9, tf));
  EXPECT_TRUE(cosine_hit(disjoint, kTransfer, 1, 0.0, tf));
}

TEST(CosineHit, StraddlingFixtureMatchesHandOracle) {
  // TF cosines against "a b c d": sharing m of 4 distinct words (prediction
  // has exactly m words) gives m / (2 sqrt m) = sqrt(m) / 2.
  // m=1: 0.5, m=2: 0.707, m=3: 0.866, m=4: 1.0.
  TfIdfScorer tf = TfIdfScorer::term_frequency();
  const Truth truth{"f", VulnType::WrongLogic, "a b c d"};
  const std::vector<std::string> descriptions{"a", "a b", "a b c", "a b c d", "b", "c d", "b c d", "z", "d a", "x y"};
  int hits = 0;
  for (const auto& d : descriptions) hits += cosine_hit(ranked("c", {{"f", VulnType::Other}}, {d}), truth, 1, 0.7, tf);
  EXPECT_EQ(hits, 6);  // the two-, three- and four-word overlaps
}

TEST(Evaluate, RatesAndLayout) {
  TruthMap truths;
  SystemEntry sys{"s", {}};
  for (int i = 0; i < 108; ++i) {
    const std::string id = "c" + std::to_string(i);
    truths[id] = kTransfer;
    if (i < 65) sys.predictions[id] = ranked(id, {{"transfer", VulnType::IntegerOverflow}}, {kTransfer.description});
  }
  TfIdfScorer tf = TfIdfScorer::term_frequency();
  std::vector<SystemEntry> systems{sys};
  MetricTable table = evaluate(systems, truths, EvalConfig{}, tf);
  const MetricRow* d5 = table.find("s", MetricKind::TopKDirect, 5);
  ASSERT_NE(d5, nullptr);
  EXPECT_EQ(d5->hits, 65u);
  EXPECT_EQ(d5->n, 108u);
  EXPECT_NEAR(d5->hit_rate(), 0.60, 0.005);
  EXPECT_FALSE(d5->threshold.has_value());
  const MetricRow* c9 = table.find("s", MetricKind::TopKCosine, 1, 0.9);
  ASSERT_NE(c9, nullptr);
  EXPECT_EQ(c9->hits, 65u);
  EXPECT_EQ(table.rows.size(), 2u + 6u);
}

TEST(Evaluate, EmptyTruths) {
  TfIdfScorer tf = TfIdfScorer::term_frequency();
  std::vector<SystemEntry> systems{{"s", {}}};
  EXPECT_TRUE(evaluate(systems, TruthMap{}, EvalConfig{}, tf).rows.empty());
}

TEST(Evaluate, ConfigValidation) {
  EvalConfig bad;
  bad.ks = {0};
  EXPECT_THROW(bad.validate(), Error);
  bad = EvalConfig{};
  bad.thresholds = {1.5};
  EXPECT_THROW(bad.validate(), Error);
  bad = EvalConfig{};
  bad.direct = bad.cosine = false;
  EXPECT_THROW(bad.validate(), Error);
}

TEST(MetricTableTest, CsvRoundTripAndText) {
  MetricTable t;
  t.systems = {"a", "b"};
  t.rows = {{"a", MetricKind::TopKCosine, 1, 0.5, 3, 4},
            {"a", MetricKind::TopKDirect, 1, std::nullopt, 2, 4},
            {"b", MetricKind::TopKCosine, 1, 0.5, 1, 4},
            {"b", MetricKind::TopKDirect, 1, std::nullopt, 0, 4}};
  const std::string csv = t.to_csv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "system_id,metric,k,threshold,hits,n,hit_rate");
  EXPECT_NE(csv.find("a,top_k_cosine,1,0.5,3,4,0.750000"), std::string::npos);
  MetricTable back = MetricTable::from_csv(csv);
  EXPECT_EQ(back.to_csv(), csv);
  const std::string text = t.to_text();
  EXPECT_NE(text.find("Top 1 hit (cs)"), std::string::npos);
  EXPECT_NE(text.find("Top 1 hit (direct) | -"), std::string::npos);
  EXPECT_LT(text.find("(cs)"), text.find("(direct)"));
  EXPECT_NE(text.find("0.75"), std::string::npos);
}

TEST(Confusion, DiagonalAndOffDiagonal) {
  TruthMap truths;
  SystemPredictions preds;
  for (std::size_t i = 0; i < kPromptVulnTypes.size(); ++i) {
    const std::string id = "c" + std::to_string(i);
    truths[id] = Truth{"f", kPromptVulnTypes[i], ""};
    preds[id] = ranked(id, {{"f", kPromptVulnTypes[i]}});
  }
  ConfusionMatrix diag = confusion(preds, truths);
  EXPECT_EQ(diag.total(), 6u);
  for (std::size_t i = 0; i < 6; ++i) EXPECT_EQ(diag.counts[i][i], 1u);

  TruthMap one{{"x", Truth{"f", VulnType::AccessControl, ""}}};
  SystemPredictions wrong{{"x", ranked("x", {{"f", VulnType::IntegerOverflow}})}};
  ConfusionMatrix m = confusion(wrong, one);
  EXPECT_EQ(m.total(), 1u);
  EXPECT_EQ(m.at(VulnType::AccessControl, VulnType::IntegerOverflow), 1u);
  EXPECT_EQ(confusion(SystemPredictions{}, one).no_prediction(VulnType::AccessControl), 1u);
}

TEST(Confusion, MatchesBruteForceTally) {
  std::mt19937_64 rng(31);
  TruthMap truths;
  SystemPredictions preds;
  std::size_t tally[7][8] = {};
  for (int i = 0; i < 20; ++i) {
    const std::string id = "c" + std::to_string(i);
    const VulnType t = kAllVulnTypes[rng() % 7];
    truths[id] = Truth{"f", t, ""};
    const std::size_t col = rng() % 8;
    if (col < 7) preds[id] = ranked(id, {{"f", kAllVulnTypes[col]}, {"g", VulnType::Other}});
    ++tally[static_cast<std::size_t>(t)][col];
  }
  ConfusionMatrix m = confusion(preds, truths);
  for (std::size_t r = 0; r < 7; ++r) {
    for (std::size_t c = 0; c < 8; ++c) EXPECT_EQ(m.counts[r][c], tally[r][c]) << r << "," << c;
  }
  EXPECT_EQ(m.total(), 20u);
}

TEST(Scenarios, FourCasesAndAgreement) {
  TruthMap truths;
  SystemPredictions single, ens;
  std::map<std::string, VoteMatrix> matrices;
  const std::vector<std::string> models{"m1", "m2", "m3"};
  auto add = [&](const std::string& id, bool s_hit, bool e_hit, std::vector<std::vector<std::string>> votes) {
    truths[id] = Truth{"t", VulnType::WrongLogic, ""};
    single[id] = ranked(id, {{s_hit ? "t" : "x", VulnType::WrongLogic}});
    ens[id] = ranked(id, {{e_hit ? "t" : "y", VulnType::WrongLogic}});
    std::vector<AuditRun> runs;
    for (std::size_t i = 0; i < models.size(); ++i) {
      AuditRun r{models[i], id, ParseStatus::Parsed, {}, ""};
      for (const auto& fn : votes[i]) r.findings.push_back({fn, VulnType::WrongLogic, ""});
      runs.push_back(r);
    }
    matrices.emplace(id, build_vote_matrix(id, runs, models));
  };
  add("both", true, true, {{"t"}, {"t"}, {"x"}});
  add("single", true, false, {{"y"}, {"t"}, {"y"}});
  add("ens", false, true, {{"t"}, {"t"}, {"t"}});
  add("none", false, false, {{"y"}, {}, {}});
  ScenarioReport report = scenario_analysis(single, ens, truths, matrices, 5);
  auto counts = report.counts();
  EXPECT_EQ(counts[Scenario::BothRight], 1u);
  EXPECT_EQ(counts[Scenario::SingleOnly], 1u);
  EXPECT_EQ(counts[Scenario::EnsembleOnly], 1u);
  EXPECT_EQ(counts[Scenario::BothWrong], 1u);
  std::map<std::string, int> agreement;
  for (const auto& e : report.entries) agreement[e.contract_id] = e.agreement;
  EXPECT_EQ(agreement["both"], 2);
  EXPECT_EQ(agreement["ens"], 3);
  EXPECT_EQ(agreement["single"], 2);  // ensemble top-1 pair y
  EXPECT_EQ(agreement["none"], 1);
  EXPECT_EQ(report.model_count, 3);
  EXPECT_NE(report.agreement_histogram_csv().find("both_right,2,1"), std::string::npos);

  SystemPredictions fewer = ens;
  fewer.erase("none");
  try {
    scenario_analysis(single, fewer, truths, matrices, 5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::MismatchedContractSets);
  }
}
