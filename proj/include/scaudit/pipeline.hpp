#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "scaudit/backends.hpp"
#include "scaudit/corpus.hpp"
#include "scaudit/ensemble.hpp"
#include "scaudit/evaluation.hpp"

namespace scaudit {

// Run directory layout:
//   run.json                     run manifest (config snapshot, stage log)
//   corpus/                      serialized copy of the audited corpus
//   cache/                       completions, content-addressed (default)
//   audit/completions.jsonl      per (backend, contract) call outcome
//   audit/audit_runs.jsonl       parsed, canonicalized findings
//   ensemble/<system>.json       learned ensemble configurations
//   predictions.jsonl            ensemble predictions
//   reports/                     metric table, confusion matrices, scenarios
namespace run_layout {
inline constexpr const char* kManifest = "run.json";
inline constexpr const char* kCorpusDir = "corpus";
inline constexpr const char* kCorpusManifest = "corpus/manifest.jsonl";
inline constexpr const char* kCacheDir = "cache";
inline constexpr const char* kCompletions = "audit/completions.jsonl";
inline constexpr const char* kAuditRuns = "audit/audit_runs.jsonl";
inline constexpr const char* kEnsembleDir = "ensemble";
inline constexpr const char* kPredictions = "predictions.jsonl";
inline constexpr const char* kReportsDir = "reports";
}  // namespace run_layout

struct CorpusLocation {
  fs::path manifest;
  // Defaults to the manifest's directory.
  fs::path root;

  fs::path resolved_root() const;
};

Corpus load_corpus_at(const CorpusLocation& location, const fs::path& asset_dir);

struct AuditOptions {
  CorpusLocation corpus;
  fs::path out_dir;
  // Defaults to <out_dir>/cache.
  fs::path cache_dir;
  GenerationParams params;
  int topk = kDefaultTopK;
  std::size_t parallelism = 4;
  RetryPolicy retry;
  fs::path asset_dir = default_asset_dir();
};

struct AuditSummary {
  fs::path run_dir;
  std::size_t runs = 0;
  std::size_t backend_failures = 0;
  std::size_t parse_failures = 0;
  std::size_t backend_calls = 0;
};

// Renders prompts, fans out to every backend, caches completions and
// persists AuditRuns. Backend failures are recorded, not thrown.
AuditSummary run_audit(const AuditOptions& options, BackendRegistry& registry);

struct OptimizeOptions {
  fs::path run_dir;
  CorpusSplit split;
  std::vector<EnsembleMethod> methods{EnsembleMethod::Weighted, EnsembleMethod::PermOpt};
  int k = kDefaultTopK;
  // Defaults to <run_dir>/ensemble.
  fs::path out_dir;
};

// Learns weights and/or the priority order on the split's validation ids.
std::vector<EnsembleConfig> run_optimize(const OptimizeOptions& options);

struct EnsembleOptions {
  fs::path run_dir;
  // Defaults to every file in <run_dir>/ensemble, by name.
  std::vector<fs::path> configs;
};

std::size_t run_ensemble(const EnsembleOptions& options);

enum class ScorerKind { TfIdf, EmbeddingService };

struct EvalOptions {
  fs::path run_dir;
  EvalConfig config;
  // When set, only its test ids are scored.
  std::optional<CorpusSplit> split;
  ScorerKind scorer = ScorerKind::TfIdf;
  std::string embedding_endpoint;
};

struct EvalSummary {
  MetricTable table;
  std::string best_single_system;
  std::vector<fs::path> files;
};

EvalSummary run_eval(const EvalOptions& options);

// Aligned metric table re-rendered from reports/metrics.csv.
std::string render_report(const fs::path& run_dir);

struct ExportOptions {
  CorpusLocation corpus;
  std::string template_id;
  fs::path out;
  // Defaults to lora_manifest.json next to `out`.
  fs::path lora_manifest;
  fs::path asset_dir = default_asset_dir();
};

struct ExportSummary {
  std::size_t exported = 0;
  fs::path lora_manifest;
};

// Exports the records whose dataset matches the template and merges the
// dataset entry into the LoRA manifest.
ExportSummary run_export_finetune(const ExportOptions& options);

std::vector<AuditRun> load_audit_runs(const fs::path& run_dir);

json load_run_manifest(const fs::path& run_dir);

}  // namespace scaudit
