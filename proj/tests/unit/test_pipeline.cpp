#include <gtest/gtest.h>

#include "scaudit/error.hpp"
#include "scaudit/pipeline.hpp"
#include "support.hpp"

using namespace scaudit;
namespace st = scaudit::testing;

namespace {

fs::path replay() { return st::fixture_dir() / "replay"; }

AuditOptions audit_options(const fs::path& out) {
  AuditOptions o;
  o.corpus = CorpusLocation{replay() / "manifest.jsonl", {}};
  o.out_dir = out;
  o.retry.initial_backoff = std::chrono::milliseconds(0);
  o.asset_dir = st::asset_dir();
  return o;
}

ErrorCode code_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  ADD_FAILURE() << "no error thrown";
  return ErrorCode::BadConfig;
}

// One replay pipeline run shared by the read-only tests below.
class ReplayRun : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    dir_ = new fs::path(st::scratch_dir("pipeline_shared") / "run");
    st::run_replay_pipeline(*dir_);
  }
  static void TearDownTestSuite() {
    fs::remove_all(dir_->parent_path());
    delete dir_;
  }
  static const fs::path& dir() { return *dir_; }

 private:
  static fs::path* dir_;
};

fs::path* ReplayRun::dir_ = nullptr;

}  // namespace

TEST(Audit, ValidatesBeforeSideEffects) {
  const fs::path scratch = st::scratch_dir("audit_validation");
  BackendRegistry reg = BackendRegistry::load(replay() / "backends.json");

  AuditOptions missing = audit_options(scratch / "a");
  missing.corpus.manifest = scratch / "none.jsonl";
  EXPECT_EQ(code_of([&] { run_audit(missing, reg); }), ErrorCode::MissingFile);
  EXPECT_FALSE(fs::exists(scratch / "a"));

  AuditOptions bad_params = audit_options(scratch / "b");
  bad_params.params.top_p = 2.0;
  EXPECT_EQ(code_of([&] { run_audit(bad_params, reg); }), ErrorCode::BadParams);
  EXPECT_FALSE(fs::exists(scratch / "b"));

  AuditOptions bad_topk = audit_options(scratch / "c");
  bad_topk.topk = 0;
  EXPECT_EQ(code_of([&] { run_audit(bad_topk, reg); }), ErrorCode::BadTopK);
  EXPECT_FALSE(fs::exists(scratch / "c"));

  BackendRegistry empty;
  EXPECT_EQ(code_of([&] { run_audit(audit_options(scratch / "d"), empty); }), ErrorCode::BadConfig);
  EXPECT_FALSE(fs::exists(scratch / "d"));
}

TEST(Audit, PersistsRunsCompletionsAndManifest) {
  const fs::path run = st::scratch_dir("audit_full") / "run";
  BackendRegistry reg = BackendRegistry::load(replay() / "backends.json");
  AuditSummary s = run_audit(audit_options(run), reg);
  EXPECT_EQ(s.runs, 60u);
  EXPECT_EQ(s.backend_failures, 1u);
  EXPECT_EQ(s.parse_failures, 1u);
  EXPECT_EQ(s.backend_calls, 60u);

  auto runs = load_audit_runs(run);
  ASSERT_EQ(runs.size(), 60u);
  EXPECT_EQ(runs.front().backend_id, "model_a");
  EXPECT_EQ(runs.front().contract_id, "c01");

  auto completions = read_jsonl(run / run_layout::kCompletions);
  ASSERT_EQ(completions.size(), 60u);
  for (const auto& c : completions) {
    EXPECT_TRUE(c.contains("backend_id") && c.contains("contract_id") && c.contains("ok"));
    if (c.at("ok")) {
      EXPECT_EQ(c.at("prompt_hash").get<std::string>().size(), 64u);
    } else {
      EXPECT_EQ(c.at("error"), "BackendRefusal");
    }
  }

  json manifest = load_run_manifest(run);
  EXPECT_EQ(manifest.at("run_id").get<std::string>().size(), 16u);
  EXPECT_TRUE(manifest.contains("created_at"));
  EXPECT_EQ(manifest.at("config").at("topk"), 5);
  EXPECT_EQ(manifest.at("config").at("params").at("max_new_tokens"), 800);
  EXPECT_EQ(manifest.at("config").at("backends").at("backends").size(), 5u);
  EXPECT_EQ(manifest.at("config").at("corpus").at("records"), 12);
  EXPECT_TRUE(fs::exists(run / run_layout::kCorpusManifest));

  // Warm rerun into the same directory reuses the cache; only the failure is retried.
  const std::string first_runs = st::slurp(run / run_layout::kAuditRuns);
  for (Backend* b : reg.backends()) b->reset_call_count();
  AuditSummary again = run_audit(audit_options(run), reg);
  EXPECT_EQ(again.backend_calls, 1u);
  EXPECT_EQ(st::slurp(run / run_layout::kAuditRuns), first_runs);
}

TEST(Optimize, NeedsAnAuditedRunAndValidationIds) {
  const fs::path scratch = st::scratch_dir("optimize_errors");
  OptimizeOptions o;
  o.run_dir = scratch / "empty";
  o.split = CorpusSplit::from_json(read_json_file(replay() / "split.json"));
  EXPECT_EQ(code_of([&] { run_optimize(o); }), ErrorCode::BadRunDirectory);

  BackendRegistry reg = BackendRegistry::load(replay() / "backends.json");
  run_audit(audit_options(scratch / "run"), reg);
  o.run_dir = scratch / "run";
  o.split.validation_ids.clear();
  EXPECT_EQ(code_of([&] { run_optimize(o); }), ErrorCode::EmptyValidation);
  o.split.validation_ids = {"c99"};
  EXPECT_EQ(code_of([&] { run_optimize(o); }), ErrorCode::BadConfig);
  EXPECT_FALSE(fs::exists(scratch / "run" / run_layout::kEnsembleDir));
}

TEST_F(ReplayRun, OptimizeWritesProvenance) {
  for (const char* name : {"ensemble_weighted.json", "ensemble_perm_opt.json"}) {
    EnsembleConfig c = EnsembleConfig::from_json(read_json_file(dir() / run_layout::kEnsembleDir / name));
    EXPECT_EQ(c.provenance.at("validation_split_id"), "62d1ab40975d9519");
    EXPECT_EQ(c.provenance.at("validation_size"), 3);
    EXPECT_EQ(c.provenance.at("k"), 5);
    EXPECT_TRUE(c.provenance.contains("validation_hit_rate"));
  }
  EnsembleConfig p = EnsembleConfig::from_json(read_json_file(dir() / run_layout::kEnsembleDir / "ensemble_perm_opt.json"));
  EXPECT_EQ(p.provenance.at("candidates_evaluated"), 120);
  json manifest = load_run_manifest(dir());
  EXPECT_EQ(manifest.at("stages").at("optimize").at("split").at("seed"), 7);
}

TEST_F(ReplayRun, OnePredictionPerContractPerSystem) {
  auto lines = read_jsonl(dir() / run_layout::kPredictions);
  EXPECT_EQ(lines.size(), 24u);
  std::map<std::string, int> per_system;
  for (const auto& l : lines) {
    ++per_system[l.at("system_id")];
    EXPECT_LE(l.at("ranked_pairs").size(), 5u);
  }
  EXPECT_EQ(per_system["ensemble_weighted"], 12);
  EXPECT_EQ(per_system["ensemble_perm_opt"], 12);
}

TEST_F(ReplayRun, ReportsWritten) {
  const fs::path reports = dir() / run_layout::kReportsDir;
  for (const char* f : {"metrics.csv", "metrics.txt", "parse_status.csv", "summary.json", "confusion_model_a.csv",
                        "confusion_ensemble_weighted.csv", "scenarios_ensemble_perm_opt.csv",
                        "agreement_ensemble_weighted.csv", "scenario_types_ensemble_weighted.csv"}) {
    EXPECT_TRUE(fs::exists(reports / f)) << f;
  }
  EXPECT_EQ(render_report(dir()), st::slurp(reports / "metrics.txt"));
  json summary = read_json_file(reports / "summary.json");
  EXPECT_EQ(summary.at("contracts"), 12);
  EXPECT_EQ(summary.at("systems").size(), 7u);
  EXPECT_NE(st::slurp(reports / "parse_status.csv").find("model_c,10,1,1,0"), std::string::npos);
  EXPECT_NE(st::slurp(reports / "parse_status.csv").find("model_e,11,0,0,1"), std::string::npos);
}

TEST_F(ReplayRun, EvalOnTestSplitOnly) {
  const fs::path copy = st::scratch_dir("eval_split") / "run";
  fs::copy(dir(), copy, fs::copy_options::recursive);
  EvalOptions o;
  o.run_dir = copy;
  o.split = CorpusSplit::from_json(read_json_file(replay() / "split.json"));
  EvalSummary s = run_eval(o);
  const MetricRow* row = s.table.find("model_a", MetricKind::TopKDirect, 1);
  ASSERT_NE(row, nullptr);
  EXPECT_EQ(row->n, 3u);
}

TEST(Report, NeedsMetrics) {
  EXPECT_EQ(code_of([] { render_report(st::scratch_dir("report_empty")); }), ErrorCode::BadRunDirectory);
}

TEST(Ensemble, RejectsConfigsForOtherModels) {
  const fs::path scratch = st::scratch_dir("ensemble_bad");
  BackendRegistry reg = BackendRegistry::load(replay() / "backends.json");
  run_audit(audit_options(scratch / "run"), reg);
  EnsembleConfig c;
  c.method = EnsembleMethod::Weighted;
  c.weights = {{"model_a", 1.0}};
  write_text_atomic(scratch / "w.json", c.to_json().dump());
  EXPECT_EQ(code_of([&] { run_ensemble(EnsembleOptions{scratch / "run", {scratch / "w.json"}}); }),
            ErrorCode::WeightMissing);
  EXPECT_EQ(code_of([&] { run_ensemble(EnsembleOptions{scratch / "run", {}}); }), ErrorCode::BadConfig);
  EXPECT_FALSE(fs::exists(scratch / "run" / run_layout::kPredictions));
}

TEST(ExportFinetune, RecordsAndLoraManifest) {
  const fs::path scratch = st::scratch_dir("export_finetune");
  ExportOptions o;
  o.corpus = CorpusLocation{replay() / "manifest.jsonl", {}};
  o.template_id = "cve";
  o.out = scratch / "cve.jsonl";
  o.asset_dir = st::asset_dir();
  ExportSummary s = run_export_finetune(o);
  EXPECT_EQ(s.exported, 12u);
  EXPECT_EQ(s.lora_manifest, scratch / "lora_manifest.json");

  // The fine-tuning side reads {prompt, completion, meta} lines.
  for (const json& line : read_jsonl(o.out)) {
    EXPECT_TRUE(line.at("prompt").is_string());
    EXPECT_TRUE(line.at("completion").is_string());
    EXPECT_EQ(line.at("meta").at("dataset_tag"), "cve");
    EXPECT_EQ(line.at("meta").at("template_id"), "cve");
  }

  json lora = read_json_file(s.lora_manifest);
  EXPECT_EQ(lora.at("base_model"), "NTQAI/Nxcode-CQ-7B-orpo");
  EXPECT_EQ(lora.at("rank"), 32);
  EXPECT_EQ(lora.at("batch_size"), 32);
  EXPECT_EQ(lora.at("epochs"), 40);
  EXPECT_DOUBLE_EQ(lora.at("learning_rate").get<double>(), 2e-4);
  EXPECT_EQ(lora.at("grad_accum"), 2);
  EXPECT_EQ(lora.at("precision"), "bfloat16");
  EXPECT_EQ(lora.at("stages"), (json{"ethereum", "cve"}));
  EXPECT_EQ(lora.at("target_modules").size(), 8u);
  EXPECT_EQ(lora.at("datasets").at("cve").at("records"), 12);
  EXPECT_EQ(lora.at("datasets").at("cve").at("path"), o.out.string());

  // A second export merges into the existing manifest.
  lora["rank"] = 16;
  write_text_atomic(s.lora_manifest, lora.dump());
  o.out = scratch / "cve2.jsonl";
  run_export_finetune(o);
  json merged = read_json_file(s.lora_manifest);
  EXPECT_EQ(merged.at("rank"), 16);
  EXPECT_EQ(merged.at("datasets").at("cve").at("path"), o.out.string());
}

TEST(ExportFinetune, UnknownTemplateWritesNothing) {
  const fs::path scratch = st::scratch_dir("export_unknown");
  ExportOptions o;
  o.corpus = CorpusLocation{replay() / "manifest.jsonl", {}};
  o.template_id = "alpaca";
  o.out = scratch / "x.jsonl";
  o.asset_dir = st::asset_dir();
  EXPECT_EQ(code_of([&] { run_export_finetune(o); }), ErrorCode::TemplateNotFound);
  EXPECT_TRUE(fs::is_empty(scratch));
}

TEST(ExportFinetune, EthereumTemplateFiltersCveRecords) {
  const fs::path scratch = st::scratch_dir("export_eth");
  ExportOptions o;
  o.corpus = CorpusLocation{replay() / "manifest.jsonl", {}};
  o.template_id = "ethereum";
  o.out = scratch / "eth.jsonl";
  o.asset_dir = st::asset_dir();
  EXPECT_EQ(run_export_finetune(o).exported, 0u);
  EXPECT_TRUE(read_jsonl(o.out).empty());
}
