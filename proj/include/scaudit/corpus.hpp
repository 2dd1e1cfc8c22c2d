#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "scaudit/jsonl.hpp"
#include "scaudit/taxonomy.hpp"

namespace scaudit {

class TemplateRegistry;

enum class DatasetTag { Ethereum, Cve };

std::string_view to_string(DatasetTag tag);
DatasetTag parse_dataset_tag(std::string_view text);

struct GroundTruthLabel {
  std::string function_name;
  VulnType vulnerability_type = VulnType::Other;
  // Vulnerability name exactly as written in the manifest.
  std::string vulnerability_name;
  std::string description;

  bool operator==(const GroundTruthLabel&) const = default;
};

struct ContractRecord {
  std::string id;
  std::string source_path;
  std::string source_code;
  std::vector<GroundTruthLabel> labels;
  DatasetTag dataset_tag = DatasetTag::Cve;

  // Last line-leading `contract X` declaration in the source, else the file stem.
  std::string contract_name() const;

  bool operator==(const ContractRecord&) const = default;
};

// Immutable once constructed; records keep manifest order.
class Corpus {
 public:
  Corpus() = default;
  explicit Corpus(std::vector<ContractRecord> records);

  const std::vector<ContractRecord>& records() const { return records_; }
  std::size_t size() const { return records_.size(); }
  bool empty() const { return records_.empty(); }

  const ContractRecord* find(std::string_view id) const;
  std::vector<std::string> ids() const;

  // Stable digest over ids, labels and source text.
  std::string content_hash() const;

  Corpus subset(const std::vector<std::string>& ids) const;

 private:
  std::vector<ContractRecord> records_;
};

// Manifest lines: {"id", "source_path", "dataset_tag", "labels": [{"function_name",
// "vulnerability_type", "description"}]}; source_path is relative to root.
Corpus load_corpus(const fs::path& root, const fs::path& manifest, const AliasTable& aliases);

// Writes sources under root/<source_path> and the manifest.
void save_corpus(const Corpus& corpus, const fs::path& root, const fs::path& manifest);

json label_to_json(const GroundTruthLabel& label);

struct SplitFractions {
  double train = 0.8;
  double validation = 0.1;
  double test = 0.1;
};

struct CorpusSplit {
  std::vector<std::string> train_ids;
  std::vector<std::string> validation_ids;
  std::vector<std::string> test_ids;
  std::uint64_t seed = 0;
  SplitFractions fractions;

  json to_json() const;
  static CorpusSplit from_json(const json& doc);
  // Short digest identifying the partition.
  std::string split_id() const;
};

// Deterministic shuffle seeded by `seed`; validation and test get
// round(fraction * N) records each, train gets the remainder.
CorpusSplit split_corpus(const Corpus& corpus, SplitFractions fractions, std::uint64_t seed);

// Line-delimited {prompt, completion, meta}; returns the record count.
std::size_t export_finetune_set(const Corpus& corpus, const TemplateRegistry& templates,
                                std::string_view template_id, const fs::path& out);

}  // namespace scaudit
