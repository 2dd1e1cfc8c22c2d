#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <sstream>

#include "scaudit/error.hpp"
#include "scaudit/pipeline.hpp"

using namespace scaudit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitInvalid = 1;
constexpr int kExitPartial = 2;

SplitFractions parse_fractions(const std::vector<double>& values) {
  if (values.size() != 3) throw Error(ErrorCode::BadFractions, "--fractions takes train,validation,test");
  return SplitFractions{values[0], values[1], values[2]};
}

CorpusSplit resolve_split(const std::string& split_file, std::optional<std::uint64_t> seed,
                          const std::vector<double>& fractions, const fs::path& run_dir) {
  if (!split_file.empty()) return CorpusSplit::from_json(read_json_file(split_file));
  if (!seed) throw Error(ErrorCode::BadConfig, "give --split or --seed");
  json run = load_run_manifest(run_dir);
  const fs::path asset_dir = run.at("config").value("asset_dir", default_asset_dir().string());
  Corpus corpus = load_corpus_at(CorpusLocation{run_dir / run_layout::kCorpusManifest,
                                                run_dir / run_layout::kCorpusDir},
                                 asset_dir);
  return split_corpus(corpus, parse_fractions(fractions), *seed);
}

bool has_backend_failures(const fs::path& run_dir) {
  for (const auto& run : load_audit_runs(run_dir)) {
    if (run.status == ParseStatus::BackendFailure) return true;
  }
  return false;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Smart contract vulnerability auditing with LLM ensembles"};
  app.require_subcommand(1);

  std::string corpus_path, corpus_root, out, asset_dir = default_asset_dir().string();
  app.add_option("--assets", asset_dir, "Template and alias directory");

  // ingest
  auto* ingest = app.add_subcommand("ingest", "Validate a corpus manifest and optionally copy it");
  ingest->add_option("--corpus", corpus_path, "Manifest (JSONL)")->required();
  ingest->add_option("--root", corpus_root, "Source root (default: manifest directory)");
  ingest->add_option("--out", out, "Write a normalized copy to this directory");

  // split
  std::uint64_t seed = 0;
  std::vector<double> fractions{0.8, 0.1, 0.1};
  auto* split = app.add_subcommand("split", "Partition a corpus into train/validation/test ids");
  split->add_option("--corpus", corpus_path)->required();
  split->add_option("--root", corpus_root);
  split->add_option("--seed,--split-seed", seed)->required();
  split->add_option("--fractions", fractions, "train,validation,test")->delimiter(',')->expected(3);
  split->add_option("--out", out, "Split file (JSON)")->required();

  // audit
  std::string backends_path, params_path, cache_dir;
  int topk = kDefaultTopK;
  std::size_t parallelism = 4;
  int attempts = 3, backoff_ms = 1000;
  auto* audit = app.add_subcommand("audit", "Run every backend over the corpus");
  audit->add_option("--corpus", corpus_path)->required();
  audit->add_option("--root", corpus_root);
  audit->add_option("--backends", backends_path, "Backend registry (JSON)")->required();
  audit->add_option("--params", params_path, "Generation parameters (JSON)");
  audit->add_option("--topk", topk, "Findings requested per contract")->check(CLI::PositiveNumber);
  audit->add_option("--parallelism", parallelism)->check(CLI::PositiveNumber);
  audit->add_option("--retries", attempts, "Attempts per call")->check(CLI::PositiveNumber);
  audit->add_option("--backoff-ms", backoff_ms)->check(CLI::NonNegativeNumber);
  audit->add_option("--cache-dir", cache_dir, "Completion cache (default: <out>/cache)");
  audit->add_option("--out", out, "Run directory")->required();

  // optimize
  std::string run_dir, split_file, method = "all";
  std::optional<std::uint64_t> opt_seed;
  int k = kDefaultTopK;
  auto* optimize = app.add_subcommand("optimize", "Learn ensemble weights / priority order on validation ids");
  optimize->add_option("--run", run_dir)->required();
  optimize->add_option("--split", split_file, "Split file from `split`");
  optimize->add_option("--seed,--split-seed", opt_seed, "Split the run corpus with this seed");
  optimize->add_option("--fractions", fractions)->delimiter(',')->expected(3);
  optimize->add_option("--method", method)->check(CLI::IsMember({"weighted", "perm-opt", "perm_opt", "all"}));
  optimize->add_option("--k", k)->check(CLI::PositiveNumber);
  optimize->add_option("--out", out, "Config directory (default: <run>/ensemble)");

  // ensemble
  std::vector<std::string> config_paths;
  auto* ensemble = app.add_subcommand("ensemble", "Produce ensemble predictions");
  ensemble->add_option("--run", run_dir)->required();
  ensemble->add_option("--config", config_paths, "Ensemble config files (default: <run>/ensemble/*.json)");

  // eval
  std::vector<int> ks;
  std::vector<double> thresholds;
  std::string scorer = "tfidf", endpoint;
  auto* eval = app.add_subcommand("eval", "Score singles and ensembles against ground truth");
  eval->add_option("--run", run_dir)->required();
  eval->add_option("--split", split_file, "Score only the split's test ids");
  eval->add_option("--seed,--split-seed", opt_seed);
  eval->add_option("--fractions", fractions)->delimiter(',')->expected(3);
  eval->add_option("--k", ks, "Cutoffs, e.g. 1,5")->delimiter(',');
  eval->add_option("--thresholds", thresholds, "Cosine thresholds, e.g. 0.5,0.7,0.9")->delimiter(',');
  eval->add_option("--scorer", scorer)->check(CLI::IsMember({"tfidf", "embedding"}));
  eval->add_option("--embedding-endpoint", endpoint);

  // report
  auto* report = app.add_subcommand("report", "Print the metric table of an evaluated run");
  report->add_option("--run", run_dir)->required();

  // export-finetune
  std::string template_id, lora_manifest;
  auto* exporter = app.add_subcommand("export-finetune", "Write instruction-tuning records");
  exporter->add_option("--corpus", corpus_path)->required();
  exporter->add_option("--root", corpus_root);
  exporter->add_option("--template", template_id, "cve | ethereum")->required();
  exporter->add_option("--out", out, "Output JSONL")->required();
  exporter->add_option("--lora-manifest", lora_manifest, "Default: lora_manifest.json next to --out");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kExitOk : kExitInvalid;
  }

  try {
    const CorpusLocation location{corpus_path, corpus_root};
    if (*ingest) {
      Corpus corpus = load_corpus_at(location, asset_dir);
      std::map<std::string, std::size_t> by_dataset, by_type;
      for (const auto& record : corpus.records()) {
        ++by_dataset[std::string(to_string(record.dataset_tag))];
        for (const auto& label : record.labels) ++by_type[std::string(display_name(label.vulnerability_type))];
      }
      std::cout << corpus.size() << " records, hash " << corpus.content_hash() << "\n";
      for (const auto& [name, n] : by_dataset) std::cout << "  dataset " << name << ": " << n << "\n";
      for (const auto& [name, n] : by_type) std::cout << "  label " << name << ": " << n << "\n";
      if (!out.empty()) {
        save_corpus(corpus, out, fs::path(out) / "manifest.jsonl");
        std::cout << "wrote " << out << "\n";
      }
    } else if (*split) {
      Corpus corpus = load_corpus_at(location, asset_dir);
      CorpusSplit result = split_corpus(corpus, parse_fractions(fractions), seed);
      write_text_atomic(out, result.to_json().dump(2) + "\n");
      std::cout << "split " << result.split_id() << ": train " << result.train_ids.size() << ", validation "
                << result.validation_ids.size() << ", test " << result.test_ids.size() << "\n";
    } else if (*audit) {
      AuditOptions options;
      options.corpus = location;
      options.out_dir = out;
      options.cache_dir = cache_dir;
      if (!params_path.empty()) options.params = GenerationParams::from_json(read_json_file(params_path));
      options.topk = topk;
      options.parallelism = parallelism;
      options.retry.max_attempts = attempts;
      options.retry.initial_backoff = std::chrono::milliseconds(backoff_ms);
      options.asset_dir = asset_dir;
      BackendRegistry registry = BackendRegistry::load(backends_path);
      AuditSummary summary = run_audit(options, registry);
      std::cout << summary.runs << " audit runs in " << summary.run_dir.string() << " (" << summary.backend_calls
                << " backend calls, " << summary.backend_failures << " backend failures, "
                << summary.parse_failures << " parse failures)\n";
      if (summary.backend_failures > 0) return kExitPartial;
    } else if (*optimize) {
      OptimizeOptions options;
      options.run_dir = run_dir;
      options.split = resolve_split(split_file, opt_seed, fractions, run_dir);
      if (method != "all") options.methods = {parse_ensemble_method(method)};
      options.k = k;
      options.out_dir = out;
      for (const auto& config : run_optimize(options)) {
        std::cout << config.system_id << ": validation hit rate "
                  << config.provenance.value("validation_hit_rate", 0.0) << "\n";
      }
    } else if (*ensemble) {
      EnsembleOptions options;
      options.run_dir = run_dir;
      for (const auto& p : config_paths) options.configs.emplace_back(p);
      std::cout << run_ensemble(options) << " ensemble predictions\n";
    } else if (*eval) {
      EvalOptions options;
      options.run_dir = run_dir;
      if (!ks.empty()) options.config.ks = ks;
      if (!thresholds.empty()) options.config.thresholds = thresholds;
      if (!split_file.empty() || opt_seed) options.split = resolve_split(split_file, opt_seed, fractions, run_dir);
      if (scorer == "embedding") {
        options.scorer = ScorerKind::EmbeddingService;
        options.embedding_endpoint = endpoint;
      }
      EvalSummary summary = run_eval(options);
      std::cout << summary.table.to_text();
      if (!summary.best_single_system.empty()) std::cout << "best single: " << summary.best_single_system << "\n";
      if (has_backend_failures(run_dir)) return kExitPartial;
    } else if (*report) {
      std::cout << render_report(run_dir);
    } else if (*exporter) {
      ExportOptions options;
      options.corpus = location;
      options.template_id = template_id;
      options.out = out;
      options.lora_manifest = lora_manifest;
      options.asset_dir = asset_dir;
      ExportSummary summary = run_export_finetune(options);
      std::cout << summary.exported << " records to " << out << ", manifest " << summary.lora_manifest.string()
                << "\n";
    }
  } catch (const Error& e) {
    std::cerr << "error [" << to_string(e.code()) << "]: " << e.what() << "\n";
    return kExitInvalid;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInvalid;
  }
  return kExitOk;
}
