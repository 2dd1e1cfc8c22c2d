#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "scaudit/corpus.hpp"

namespace scaudit {

inline constexpr int kDefaultTopK = 5;

// Placeholder names a template body may reference.
const std::set<std::string>& declared_placeholders();

// Names of every `{name}` marker (name = [a-z_]+) in order of appearance.
std::vector<std::string> find_placeholders(std::string_view body);

// Single pass: bound values are inserted verbatim and never rescanned.
// Throws BadTemplate for a marker without a binding.
std::string substitute(std::string_view body, const std::map<std::string, std::string>& bindings);

struct PromptTemplate {
  std::string template_id;
  std::string body;
  std::string schema_block;
};

struct FinetuneTemplate {
  std::string template_id;
  DatasetTag dataset_tag = DatasetTag::Cve;
  std::string prompt_body;
  std::string completion_body;
  // Bound to {topk} when the prompt body asks for it.
  int topk = 1;
};

struct RenderedPrompt {
  std::string contract_id;
  std::string template_id;
  std::string text;
  int topk = kDefaultTopK;
};

struct FinetuneExample {
  std::string prompt;
  std::string completion;
};

// Template assets live in <asset_dir>/templates, indexed by index.json.
class TemplateRegistry {
 public:
  static TemplateRegistry load(const fs::path& asset_dir);

  const PromptTemplate& auditor() const { return auditor_; }
  const FinetuneTemplate& finetune(std::string_view template_id) const;
  std::vector<std::string> finetune_ids() const;

 private:
  PromptTemplate auditor_;
  std::map<std::string, FinetuneTemplate, std::less<>> finetune_;
};

// SCAUDIT_ASSET_DIR from the environment, else the source tree's assets/.
fs::path default_asset_dir();

RenderedPrompt render_auditor_prompt(const TemplateRegistry& templates,
                                     const ContractRecord& record, int topk = kDefaultTopK);

FinetuneExample render_finetune_prompt(const TemplateRegistry& templates,
                                       const ContractRecord& record,
                                       std::string_view template_id);

}  // namespace scaudit
