#include "scaudit/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <iomanip>
#include <set>
#include <sstream>

#include "scaudit/error.hpp"
#include "scaudit/hashing.hpp"
#include "scaudit/parsing.hpp"
#include "scaudit/similarity.hpp"

namespace scaudit {

namespace {

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  std::ostringstream out;
  out << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return out.str();
}

AliasTable load_aliases(const fs::path& asset_dir) {
  return AliasTable::load(asset_dir / "vuln_aliases.json");
}

void require_run_dir(const fs::path& run_dir) {
  if (!fs::is_regular_file(run_dir / run_layout::kManifest) ||
      !fs::is_regular_file(run_dir / run_layout::kAuditRuns)) {
    throw Error(ErrorCode::BadRunDirectory, run_dir.string() + " holds no completed audit");
  }
}

void update_stage(const fs::path& run_dir, const std::string& stage, json details) {
  json manifest = load_run_manifest(run_dir);
  details["completed_at"] = utc_timestamp();
  manifest["stages"][stage] = std::move(details);
  write_text_atomic(run_dir / run_layout::kManifest, manifest.dump(2) + "\n");
}

std::vector<std::string> model_order_of(const fs::path& run_dir) {
  json manifest = load_run_manifest(run_dir);
  std::vector<std::string> ids;
  try {
    for (const json& spec : manifest.at("config").at("backends").at("backends")) {
      ids.push_back(spec.at("backend_id").get<std::string>());
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadRunDirectory, std::string("run manifest: ") + e.what());
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

Corpus load_run_corpus(const fs::path& run_dir) {
  const fs::path manifest = run_dir / run_layout::kCorpusManifest;
  json run = load_run_manifest(run_dir);
  fs::path asset_dir = run.at("config").value("asset_dir", default_asset_dir().string());
  if (!fs::exists(asset_dir / "vuln_aliases.json")) asset_dir = default_asset_dir();
  return load_corpus(run_dir / run_layout::kCorpusDir, manifest, load_aliases(asset_dir));
}

TruthMap restrict(const TruthMap& truths, const std::vector<std::string>& ids, const char* what) {
  TruthMap out;
  for (const auto& id : ids) {
    auto it = truths.find(id);
    if (it == truths.end()) {
      throw Error(ErrorCode::BadConfig, std::string(what) + " id '" + id + "' is not a labeled contract of this run");
    }
    out.emplace(id, it->second);
  }
  return out;
}

std::string file_safe(std::string_view name) {
  std::string out(name);
  for (char& c : out) {
    if (!(std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '-' || c == '.')) c = '_';
  }
  return out;
}

}  // namespace

fs::path CorpusLocation::resolved_root() const {
  if (!root.empty()) return root;
  return manifest.has_parent_path() ? manifest.parent_path() : fs::path(".");
}

Corpus load_corpus_at(const CorpusLocation& location, const fs::path& asset_dir) {
  return load_corpus(location.resolved_root(), location.manifest, load_aliases(asset_dir));
}

json load_run_manifest(const fs::path& run_dir) {
  const fs::path path = run_dir / run_layout::kManifest;
  if (!fs::is_regular_file(path)) throw Error(ErrorCode::BadRunDirectory, "missing " + path.string());
  return read_json_file(path);
}

std::vector<AuditRun> load_audit_runs(const fs::path& run_dir) {
  require_run_dir(run_dir);
  std::vector<AuditRun> runs;
  for (const json& line : read_jsonl(run_dir / run_layout::kAuditRuns)) {
    runs.push_back(AuditRun::from_json(line));
  }
  return runs;
}

AuditSummary run_audit(const AuditOptions& options, BackendRegistry& registry) {
  // Validate everything before touching the output directory.
  if (registry.size() == 0) throw Error(ErrorCode::BadConfig, "no backends configured");
  if (options.out_dir.empty()) throw Error(ErrorCode::BadConfig, "no output directory");
  if (options.parallelism == 0) throw Error(ErrorCode::BadConfig, "parallelism must be >= 1");
  options.params.validate();
  const AliasTable aliases = load_aliases(options.asset_dir);
  const Corpus corpus = load_corpus_at(options.corpus, options.asset_dir);
  const TemplateRegistry templates = TemplateRegistry::load(options.asset_dir);
  std::vector<RenderedPrompt> prompts;
  prompts.reserve(corpus.size());
  for (const auto& record : corpus.records()) {
    prompts.push_back(render_auditor_prompt(templates, record, options.topk));
  }

  const fs::path cache_dir =
      options.cache_dir.empty() ? options.out_dir / run_layout::kCacheDir : options.cache_dir;
  fs::create_directories(options.out_dir);
  save_corpus(corpus, options.out_dir / run_layout::kCorpusDir,
              options.out_dir / run_layout::kCorpusManifest);
  ResponseCache cache(cache_dir);

  const std::size_t calls_before = registry.total_calls();
  const auto backends = registry.backends();
  std::vector<FanoutResult> results =
      fanout(backends, prompts, options.params, options.parallelism, CallOptions{&cache, options.retry});

  AuditSummary summary;
  summary.run_dir = options.out_dir;
  summary.backend_calls = registry.total_calls() - calls_before;

  std::vector<json> completion_lines;
  std::vector<json> run_lines;
  for (const auto& result : results) {
    json line{{"backend_id", result.backend_id}, {"contract_id", result.contract_id}};
    AuditRun run;
    if (result.ok()) {
      const Completion& c = *result.completion;
      line["ok"] = true;
      line["prompt_hash"] = c.prompt_hash;
      line["from_cache"] = c.from_cache;
      line["latency_ms"] = c.latency_ms;
      run = parse_completion(result.backend_id, result.contract_id, c.raw_text, c.prompt_hash, aliases);
      if (run.status == ParseStatus::ParseFailure) ++summary.parse_failures;
    } else {
      line["ok"] = false;
      line["error"] = std::string(to_string(result.error->code()));
      line["message"] = result.error->what();
      run = backend_failure_run(result.backend_id, result.contract_id);
      ++summary.backend_failures;
    }
    completion_lines.push_back(std::move(line));
    run_lines.push_back(run.to_json());
  }
  summary.runs = run_lines.size();

  write_jsonl_atomic(options.out_dir / run_layout::kCompletions, completion_lines);
  write_jsonl_atomic(options.out_dir / run_layout::kAuditRuns, run_lines);

  json config{{"corpus",
               {{"manifest", options.corpus.manifest.string()},
                {"root", options.corpus.resolved_root().string()},
                {"records", corpus.size()},
                {"hash", corpus.content_hash()}}},
              {"params", options.params.to_json()},
              {"backends", registry.to_json()},
              {"topk", options.topk},
              {"prompt_template", templates.auditor().template_id},
              {"asset_dir", options.asset_dir.string()},
              {"cache_dir", cache_dir.string()}};
  json manifest{{"run_id", sha256_hex(config.dump()).substr(0, 16)},
                {"created_at", utc_timestamp()},
                {"config", config},
                {"stages",
                 {{"audit",
                   {{"completed_at", utc_timestamp()},
                    {"runs", summary.runs},
                    {"backend_failures", summary.backend_failures},
                    {"parse_failures", summary.parse_failures},
                    {"backend_calls", summary.backend_calls}}}}}};
  write_text_atomic(options.out_dir / run_layout::kManifest, manifest.dump(2) + "\n");
  return summary;
}

std::vector<EnsembleConfig> run_optimize(const OptimizeOptions& options) {
  const auto runs = load_audit_runs(options.run_dir);
  const Corpus corpus = load_run_corpus(options.run_dir);
  const auto model_order = model_order_of(options.run_dir);
  const TruthMap validation =
      restrict(truths_from_corpus(corpus), options.split.validation_ids, "validation");
  if (validation.empty()) throw Error(ErrorCode::EmptyValidation, "split has no validation ids");
  if (options.k < 1) throw Error(ErrorCode::BadConfig, "k must be >= 1");
  const RunsByContract grouped = group_runs(runs);

  json base_provenance{{"validation_split_id", options.split.split_id()},
                       {"split_seed", options.split.seed},
                       {"validation_size", validation.size()},
                       {"k", options.k},
                       {"objective", "top_k_direct_hit_rate"}};

  std::vector<EnsembleConfig> configs;
  for (EnsembleMethod method : options.methods) {
    EnsembleConfig config;
    config.method = method;
    config.k = options.k;
    config.system_id = "ensemble_" + std::string(to_string(method));
    config.provenance = base_provenance;
    if (method == EnsembleMethod::Weighted) {
      config.weights = learn_weights(grouped, validation, model_order, options.k);
      config.provenance["validation_hit_rate"] = ensemble_hit_rate(grouped, validation, model_order, config);
    } else {
      PermutationSearch search = optimize_permutation(grouped, validation, model_order, options.k);
      config.permutation = search.permutation;
      config.provenance["validation_hit_rate"] = search.hit_rate;
      config.provenance["candidates_evaluated"] = search.candidates_evaluated;
    }
    configs.push_back(std::move(config));
  }

  const fs::path out_dir =
      options.out_dir.empty() ? options.run_dir / run_layout::kEnsembleDir : options.out_dir;
  json written = json::array();
  for (const auto& config : configs) {
    const fs::path path = out_dir / (config.system_id + ".json");
    write_text_atomic(path, config.to_json().dump(2) + "\n");
    written.push_back(path.string());
  }
  update_stage(options.run_dir, "optimize",
               json{{"split", options.split.to_json()}, {"k", options.k}, {"configs", written}});
  return configs;
}

std::size_t run_ensemble(const EnsembleOptions& options) {
  const auto runs = load_audit_runs(options.run_dir);
  const auto model_order = model_order_of(options.run_dir);
  const Corpus corpus = load_run_corpus(options.run_dir);

  std::vector<fs::path> paths = options.configs;
  if (paths.empty()) {
    const fs::path dir = options.run_dir / run_layout::kEnsembleDir;
    if (fs::is_directory(dir)) {
      for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.path().extension() == ".json") paths.push_back(entry.path());
      }
    }
    std::sort(paths.begin(), paths.end());
  }
  if (paths.empty()) throw Error(ErrorCode::BadConfig, "no ensemble configuration given or found");

  std::vector<EnsembleConfig> configs;
  std::set<std::string> system_ids;
  for (const auto& path : paths) {
    EnsembleConfig config = EnsembleConfig::from_json(read_json_file(path));
    config.validate(model_order);
    if (!system_ids.insert(config.system_id).second) {
      throw Error(ErrorCode::BadConfig, "duplicate ensemble system_id " + config.system_id);
    }
    configs.push_back(std::move(config));
  }

  const RunsByContract grouped = group_runs(runs);
  static const std::vector<AuditRun> kNone;
  std::vector<std::string> contract_ids = corpus.ids();
  std::sort(contract_ids.begin(), contract_ids.end());

  std::vector<json> lines;
  for (const auto& config : configs) {
    for (const auto& contract_id : contract_ids) {
      auto it = grouped.find(contract_id);
      VoteMatrix matrix =
          build_vote_matrix(contract_id, it == grouped.end() ? kNone : it->second, model_order);
      json line = ensemble_vote(matrix, config).to_json();
      line["system_id"] = config.system_id;
      line["method"] = std::string(to_string(config.method));
      line["k"] = config.k;
      lines.push_back(std::move(line));
    }
  }
  write_jsonl_atomic(options.run_dir / run_layout::kPredictions, lines);

  json used = json::array();
  for (const auto& p : paths) used.push_back(p.string());
  update_stage(options.run_dir, "ensemble", json{{"configs", used}, {"predictions", lines.size()}});
  return lines.size();
}

EvalSummary run_eval(const EvalOptions& options) {
  options.config.validate();
  const auto runs = load_audit_runs(options.run_dir);
  const auto model_order = model_order_of(options.run_dir);
  const Corpus corpus = load_run_corpus(options.run_dir);
  TruthMap truths = truths_from_corpus(corpus);
  if (options.split) truths = restrict(truths, options.split->test_ids, "test");

  const RunsByContract grouped = group_runs(runs);
  std::vector<SystemEntry> systems;
  for (const auto& model : model_order) {
    SystemEntry entry{model, {}};
    for (const auto& [contract_id, _] : truths) {
      RankedPrediction pred;
      pred.contract_id = contract_id;
      if (auto it = grouped.find(contract_id); it != grouped.end()) {
        for (const auto& run : it->second) {
          if (run.backend_id == model) pred = single_model_prediction(run);
        }
      }
      entry.predictions.emplace(contract_id, std::move(pred));
    }
    systems.push_back(std::move(entry));
  }
  const std::size_t single_count = systems.size();

  if (fs::is_regular_file(options.run_dir / run_layout::kPredictions)) {
    for (const json& line : read_jsonl(options.run_dir / run_layout::kPredictions)) {
      const std::string system_id = line.value("system_id", std::string());
      if (system_id.empty()) throw Error(ErrorCode::BadRunDirectory, "prediction without system_id");
      auto it = std::find_if(systems.begin(), systems.end(),
                             [&](const SystemEntry& s) { return s.system_id == system_id; });
      if (it == systems.end()) {
        SystemEntry entry{system_id, {}};
        for (const auto& [contract_id, _] : truths) {
          entry.predictions.emplace(contract_id, RankedPrediction{contract_id, {}});
        }
        systems.push_back(std::move(entry));
        it = std::prev(systems.end());
      }
      RankedPrediction pred = RankedPrediction::from_json(line);
      if (truths.contains(pred.contract_id)) it->predictions[pred.contract_id] = std::move(pred);
    }
  }

  std::unique_ptr<SimilarityScorer> scorer;
  if (options.scorer == ScorerKind::EmbeddingService) {
    if (options.embedding_endpoint.empty()) {
      throw Error(ErrorCode::BadConfig, "embedding scorer needs an endpoint");
    }
    scorer = std::make_unique<EmbeddingServiceScorer>(options.embedding_endpoint);
  } else {
    std::vector<std::string> documents;
    for (const auto& [_, truth] : truths) documents.push_back(truth.description);
    for (const auto& system : systems) {
      for (const auto& [_, pred] : system.predictions) {
        for (const auto& pair : pred.ranked_pairs) documents.push_back(pair.description);
      }
    }
    scorer = std::make_unique<TfIdfScorer>(TfIdfScorer::fit(documents));
  }

  EvalSummary summary;
  summary.table = evaluate(systems, truths, options.config, *scorer);

  const int k_max = options.config.ks.back();
  std::size_t best_hits = 0;
  for (std::size_t s = 0; s < single_count; ++s) {
    const MetricRow* row = summary.table.find(systems[s].system_id, MetricKind::TopKDirect, k_max);
    const std::size_t hits = row ? row->hits : 0;
    if (summary.best_single_system.empty() || hits > best_hits) {
      summary.best_single_system = systems[s].system_id;
      best_hits = hits;
    }
  }

  std::map<std::string, VoteMatrix> matrices;
  static const std::vector<AuditRun> kNone;
  for (const auto& [contract_id, _] : truths) {
    auto it = grouped.find(contract_id);
    matrices.emplace(contract_id, build_vote_matrix(contract_id, it == grouped.end() ? kNone : it->second,
                                                    model_order));
  }

  // Render everything, then write.
  std::vector<std::pair<fs::path, std::string>> outputs;
  const fs::path reports = options.run_dir / run_layout::kReportsDir;
  outputs.emplace_back(reports / "metrics.csv", summary.table.to_csv());
  outputs.emplace_back(reports / "metrics.txt", summary.table.to_text());
  for (const auto& system : systems) {
    outputs.emplace_back(reports / ("confusion_" + file_safe(system.system_id) + ".csv"),
                         confusion(system.predictions, truths).to_csv());
  }
  if (!summary.best_single_system.empty()) {
    const SystemEntry& best = *std::find_if(systems.begin(), systems.end(), [&](const SystemEntry& s) {
      return s.system_id == summary.best_single_system;
    });
    for (std::size_t s = single_count; s < systems.size(); ++s) {
      ScenarioReport report =
          scenario_analysis(best.predictions, systems[s].predictions, truths, matrices, k_max);
      const std::string name = file_safe(systems[s].system_id);
      outputs.emplace_back(reports / ("scenarios_" + name + ".csv"), report.to_csv());
      outputs.emplace_back(reports / ("agreement_" + name + ".csv"), report.agreement_histogram_csv());
      outputs.emplace_back(reports / ("scenario_types_" + name + ".csv"), report.type_histogram_csv());
    }
  }

  std::ostringstream status_csv;
  status_csv << "backend_id,parsed,empty,parse_failure,backend_failure\n";
  for (const auto& model : model_order) {
    std::map<ParseStatus, std::size_t> counts;
    for (const auto& run : runs) {
      if (run.backend_id == model) ++counts[run.status];
    }
    status_csv << model << ',' << counts[ParseStatus::Parsed] << ',' << counts[ParseStatus::Empty] << ','
               << counts[ParseStatus::ParseFailure] << ',' << counts[ParseStatus::BackendFailure] << '\n';
  }
  outputs.emplace_back(reports / "parse_status.csv", status_csv.str());

  json summary_doc{{"contracts", truths.size()},
                   {"systems", summary.table.systems},
                   {"best_single_system", summary.best_single_system},
                   {"scenario_k", k_max},
                   {"scorer", scorer->kind()},
                   {"eval_config", options.config.to_json()}};
  outputs.emplace_back(reports / "summary.json", summary_doc.dump(2) + "\n");

  for (const auto& [path, content] : outputs) {
    write_text_atomic(path, content);
    summary.files.push_back(path);
  }
  update_stage(options.run_dir, "eval",
               json{{"eval_config", options.config.to_json()},
                    {"split_seed", options.split ? json(options.split->seed) : json(nullptr)},
                    {"contracts", truths.size()}});
  return summary;
}

std::string render_report(const fs::path& run_dir) {
  const fs::path path = run_dir / run_layout::kReportsDir / "metrics.csv";
  if (!fs::is_regular_file(path)) {
    throw Error(ErrorCode::BadRunDirectory, "no metrics at " + path.string() + "; run eval first");
  }
  return MetricTable::from_csv(read_text(path)).to_text();
}

ExportSummary run_export_finetune(const ExportOptions& options) {
  const TemplateRegistry templates = TemplateRegistry::load(options.asset_dir);
  const FinetuneTemplate& tmpl = templates.finetune(options.template_id);
  const Corpus corpus = load_corpus_at(options.corpus, options.asset_dir);
  std::vector<std::string> ids;
  for (const auto& record : corpus.records()) {
    if (record.dataset_tag == tmpl.dataset_tag) ids.push_back(record.id);
  }
  const Corpus selected = corpus.subset(ids);

  ExportSummary summary;
  summary.lora_manifest = options.lora_manifest.empty()
                              ? (options.out.has_parent_path() ? options.out.parent_path() : fs::path("."))
                                    / "lora_manifest.json"
                              : options.lora_manifest;
  json manifest = fs::is_regular_file(summary.lora_manifest)
                      ? read_json_file(summary.lora_manifest)
                      : read_json_file(options.asset_dir / "lora_manifest.default.json");

  summary.exported = export_finetune_set(selected, templates, options.template_id, options.out);

  manifest["datasets"][std::string(to_string(tmpl.dataset_tag))] =
      json{{"path", options.out.string()},
           {"template_id", tmpl.template_id},
           {"records", summary.exported}};
  write_text_atomic(summary.lora_manifest, manifest.dump(2) + "\n");
  return summary;
}

}  // namespace scaudit
