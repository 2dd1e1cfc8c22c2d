#include "scaudit/corpus.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <random>
#include <set>
#include <sstream>

#include "scaudit/error.hpp"
#include "scaudit/hashing.hpp"
#include "scaudit/parsing.hpp"
#include "scaudit/prompting.hpp"

namespace scaudit {

std::string_view to_string(DatasetTag tag) {
  return tag == DatasetTag::Cve ? "cve" : "ethereum";
}

DatasetTag parse_dataset_tag(std::string_view text) {
  if (text == "cve") return DatasetTag::Cve;
  if (text == "ethereum") return DatasetTag::Ethereum;
  throw Error(ErrorCode::BadManifest, "unknown dataset_tag '" + std::string(text) + "'");
}

namespace {

bool is_ident_char(char c) {
  return std::isalnum(static_cast<unsigned char>(c)) || c == '_';
}

}  // namespace

std::string ContractRecord::contract_name() const {
  std::string found;
  std::istringstream lines(source_code);
  std::string line;
  while (std::getline(lines, line)) {
    std::size_t pos = line.find_first_not_of(" \t");
    if (pos == std::string::npos) continue;
    std::string_view rest(line);
    rest.remove_prefix(pos);
    if (rest.starts_with("abstract ")) {
      rest.remove_prefix(9);
      rest.remove_prefix(std::min(rest.find_first_not_of(" \t"), rest.size()));
    }
    if (!rest.starts_with("contract") || rest.size() <= 8 || is_ident_char(rest[8])) continue;
    rest.remove_prefix(8);
    rest.remove_prefix(std::min(rest.find_first_not_of(" \t"), rest.size()));
    std::size_t end = 0;
    while (end < rest.size() && is_ident_char(rest[end])) ++end;
    if (end > 0) found = std::string(rest.substr(0, end));
  }
  if (!found.empty()) return found;
  return fs::path(source_path).stem().string();
}

Corpus::Corpus(std::vector<ContractRecord> records) : records_(std::move(records)) {}

const ContractRecord* Corpus::find(std::string_view id) const {
  auto it = std::find_if(records_.begin(), records_.end(),
                         [&](const ContractRecord& r) { return r.id == id; });
  return it == records_.end() ? nullptr : &*it;
}

std::vector<std::string> Corpus::ids() const {
  std::vector<std::string> out;
  out.reserve(records_.size());
  for (const auto& r : records_) out.push_back(r.id);
  return out;
}

json label_to_json(const GroundTruthLabel& label) {
  return json{{"function_name", label.function_name},
              {"vulnerability_type", label.vulnerability_name},
              {"description", label.description}};
}

namespace {

json record_to_manifest_json(const ContractRecord& record) {
  json labels = json::array();
  for (const auto& label : record.labels) labels.push_back(label_to_json(label));
  return json{{"id", record.id},
              {"source_path", record.source_path},
              {"dataset_tag", std::string(to_string(record.dataset_tag))},
              {"labels", std::move(labels)}};
}

std::string require_string(const json& obj, const char* key, const std::string& where,
                           ErrorCode code = ErrorCode::BadManifest) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw Error(code, where + ": missing string field '" + key + "'");
  }
  return it->get<std::string>();
}

VulnType resolve_label_type(const std::string& name, DatasetTag tag, const AliasTable& aliases,
                            const std::string& where) {
  std::optional<VulnType> type = parse_display_name(name);
  if (!type || *type == VulnType::Other) type = aliases.match(name);
  if (type && *type != VulnType::Other) return *type;
  // Ethereum labels come from a wider taxonomy than the six evaluated types.
  if (tag == DatasetTag::Ethereum) return VulnType::Other;
  throw Error(ErrorCode::UnknownVulnerabilityType, where + ": '" + name + "'");
}

}  // namespace

std::string Corpus::content_hash() const {
  std::string material;
  for (const auto& record : records_) {
    material += record_to_manifest_json(record).dump();
    material += '\n';
    material += sha256_hex(record.source_code);
    material += '\n';
  }
  return sha256_hex(material);
}

Corpus Corpus::subset(const std::vector<std::string>& ids) const {
  std::set<std::string, std::less<>> wanted(ids.begin(), ids.end());
  std::vector<ContractRecord> out;
  for (const auto& record : records_) {
    if (wanted.contains(record.id)) out.push_back(record);
  }
  return Corpus(std::move(out));
}

Corpus load_corpus(const fs::path& root, const fs::path& manifest, const AliasTable& aliases) {
  std::vector<json> lines = read_jsonl(manifest);
  std::vector<ContractRecord> records;
  records.reserve(lines.size());
  std::set<std::string, std::less<>> seen;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const json& line = lines[i];
    std::string where = manifest.filename().string() + " record " + std::to_string(i + 1);
    if (!line.is_object()) throw Error(ErrorCode::BadManifest, where + ": not an object");

    ContractRecord record;
    record.id = require_string(line, "id", where);
    if (record.id.empty()) throw Error(ErrorCode::BadManifest, where + ": empty id");
    where += " (" + record.id + ")";
    if (!seen.insert(record.id).second) throw Error(ErrorCode::DuplicateId, record.id);

    record.source_path = require_string(line, "source_path", where);
    record.dataset_tag = parse_dataset_tag(require_string(line, "dataset_tag", where));

    const fs::path source = root / record.source_path;
    if (!fs::is_regular_file(source)) {
      throw Error(ErrorCode::MissingFile, where + ": " + source.string());
    }
    record.source_code = read_text(source);
    if (record.source_code.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw Error(ErrorCode::EmptySource, where + ": " + record.source_path);
    }

    auto labels = line.find("labels");
    if (labels == line.end() || !labels->is_array()) {
      throw Error(ErrorCode::BadManifest, where + ": missing 'labels' array");
    }
    for (const auto& raw : *labels) {
      if (!raw.is_object()) throw Error(ErrorCode::BadManifest, where + ": label not an object");
      GroundTruthLabel label;
      label.vulnerability_name =
          require_string(raw, "vulnerability_type", where, ErrorCode::MissingLabelField);
      label.vulnerability_type =
          resolve_label_type(label.vulnerability_name, record.dataset_tag, aliases, where);
      if (auto fn = raw.find("function_name"); fn != raw.end() && fn->is_string()) {
        label.function_name = fn->get<std::string>();
      }
      if (auto d = raw.find("description"); d != raw.end() && d->is_string()) {
        label.description = d->get<std::string>();
      }
      if (record.dataset_tag == DatasetTag::Cve && normalize_function_name(label.function_name).empty()) {
        throw Error(ErrorCode::MissingLabelField, where + ": cve label needs a function_name");
      }
      record.labels.push_back(std::move(label));
    }
    if (record.dataset_tag == DatasetTag::Cve && record.labels.size() != 1) {
      throw Error(ErrorCode::BadManifest, where + ": cve records carry exactly one label, found " +
                                              std::to_string(record.labels.size()));
    }
    records.push_back(std::move(record));
  }
  return Corpus(std::move(records));
}

void save_corpus(const Corpus& corpus, const fs::path& root, const fs::path& manifest) {
  std::vector<json> lines;
  lines.reserve(corpus.size());
  for (const auto& record : corpus.records()) {
    write_text_atomic(root / record.source_path, record.source_code);
    lines.push_back(record_to_manifest_json(record));
  }
  write_jsonl_atomic(manifest, lines);
}

json CorpusSplit::to_json() const {
  return json{{"seed", seed},
              {"fractions",
               {{"train", fractions.train},
                {"validation", fractions.validation},
                {"test", fractions.test}}},
              {"train_ids", train_ids},
              {"validation_ids", validation_ids},
              {"test_ids", test_ids}};
}

CorpusSplit CorpusSplit::from_json(const json& doc) {
  try {
    CorpusSplit split;
    split.seed = doc.at("seed").get<std::uint64_t>();
    const auto& f = doc.at("fractions");
    split.fractions = {f.at("train").get<double>(), f.at("validation").get<double>(),
                       f.at("test").get<double>()};
    split.train_ids = doc.at("train_ids").get<std::vector<std::string>>();
    split.validation_ids = doc.at("validation_ids").get<std::vector<std::string>>();
    split.test_ids = doc.at("test_ids").get<std::vector<std::string>>();
    return split;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadConfig, std::string("split file: ") + e.what());
  }
}

std::string CorpusSplit::split_id() const {
  return sha256_hex(to_json().dump()).substr(0, 16);
}

namespace {

// Unbiased draw in [0, bound) from a standardized engine, so splits do not
// depend on the standard library's distribution implementation.
std::uint64_t bounded_draw(std::mt19937_64& rng, std::uint64_t bound) {
  const std::uint64_t threshold = (0 - bound) % bound;
  for (;;) {
    std::uint64_t r = rng();
    if (r >= threshold) return r % bound;
  }
}

}  // namespace

CorpusSplit split_corpus(const Corpus& corpus, SplitFractions fractions, std::uint64_t seed) {
  const double parts[] = {fractions.train, fractions.validation, fractions.test};
  for (double p : parts) {
    if (!std::isfinite(p) || p < 0.0) {
      throw Error(ErrorCode::BadFractions, "fractions must be finite and non-negative");
    }
  }
  const double sum = fractions.train + fractions.validation + fractions.test;
  if (std::abs(sum - 1.0) > 1e-9) {
    throw Error(ErrorCode::BadFractions, "fractions sum to " + std::to_string(sum));
  }

  std::vector<std::string> ids = corpus.ids();
  std::sort(ids.begin(), ids.end());
  std::mt19937_64 rng(seed);
  for (std::size_t i = ids.size(); i > 1; --i) {
    std::swap(ids[i - 1], ids[bounded_draw(rng, i)]);
  }

  const auto n = ids.size();
  std::size_t n_val = std::min<std::size_t>(n, std::llround(fractions.validation * n));
  std::size_t n_test = std::min<std::size_t>(n - n_val, std::llround(fractions.test * n));

  CorpusSplit split;
  split.seed = seed;
  split.fractions = fractions;
  split.validation_ids.assign(ids.begin(), ids.begin() + n_val);
  split.test_ids.assign(ids.begin() + n_val, ids.begin() + n_val + n_test);
  split.train_ids.assign(ids.begin() + n_val + n_test, ids.end());
  std::sort(split.train_ids.begin(), split.train_ids.end());
  std::sort(split.validation_ids.begin(), split.validation_ids.end());
  std::sort(split.test_ids.begin(), split.test_ids.end());
  return split;
}

std::size_t export_finetune_set(const Corpus& corpus, const TemplateRegistry& templates,
                                std::string_view template_id, const fs::path& out) {
  const FinetuneTemplate& tmpl = templates.finetune(template_id);
  std::vector<json> lines;
  lines.reserve(corpus.size());
  for (const auto& record : corpus.records()) {
    FinetuneExample example = render_finetune_prompt(templates, record, template_id);
    lines.push_back(json{{"prompt", std::move(example.prompt)},
                         {"completion", std::move(example.completion)},
                         {"meta",
                          {{"id", record.id},
                           {"dataset_tag", std::string(to_string(record.dataset_tag))},
                           {"template_id", tmpl.template_id},
                           {"source_path", record.source_path}}}});
  }
  write_jsonl_atomic(out, lines);
  return lines.size();
}

}  // namespace scaudit
