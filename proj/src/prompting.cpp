#include "scaudit/prompting.hpp"

#include <cstdlib>

#include "scaudit/error.hpp"
#include "scaudit/parsing.hpp"

namespace scaudit {

const std::set<std::string>& declared_placeholders() {
  static const std::set<std::string> names = {
      "topk",          "code",
      "vuln_types",    "schema",
      "contract_name", "contract_name_json",
      "function_name", "function_name_json",
      "vulnerability", "vulnerability_json",
      "description",   "description_json",
      "vuln_list",     "vuln_list_json",
  };
  return names;
}

namespace {

bool is_name_char(char c) { return (c >= 'a' && c <= 'z') || c == '_'; }

// Length of the `{name}` marker starting at pos, or 0.
std::size_t marker_length(std::string_view body, std::size_t pos) {
  if (body[pos] != '{') return 0;
  std::size_t end = pos + 1;
  while (end < body.size() && is_name_char(body[end])) ++end;
  if (end == pos + 1 || end >= body.size() || body[end] != '}') return 0;
  return end - pos + 1;
}

std::string strip_one_trailing_newline(std::string text) {
  if (text.ends_with("\r\n")) {
    text.resize(text.size() - 2);
  } else if (text.ends_with('\n')) {
    text.pop_back();
  }
  return text;
}

std::string load_template_file(const fs::path& dir, const json& index_entry, const char* key) {
  auto it = index_entry.find(key);
  if (it == index_entry.end() || !it->is_string()) {
    throw Error(ErrorCode::BadTemplate, std::string("template index entry lacks '") + key + "'");
  }
  std::string body = strip_one_trailing_newline(read_text(dir / it->get<std::string>()));
  for (const auto& name : find_placeholders(body)) {
    if (!declared_placeholders().contains(name)) {
      throw Error(ErrorCode::BadTemplate,
                  it->get<std::string>() + ": undeclared placeholder {" + name + "}");
    }
  }
  return body;
}

}  // namespace

std::vector<std::string> find_placeholders(std::string_view body) {
  std::vector<std::string> names;
  for (std::size_t pos = 0; pos < body.size(); ++pos) {
    if (std::size_t len = marker_length(body, pos); len > 0) {
      names.emplace_back(body.substr(pos + 1, len - 2));
      pos += len - 1;
    }
  }
  return names;
}

std::string substitute(std::string_view body, const std::map<std::string, std::string>& bindings) {
  std::string out;
  out.reserve(body.size());
  for (std::size_t pos = 0; pos < body.size(); ++pos) {
    std::size_t len = marker_length(body, pos);
    if (len == 0) {
      out += body[pos];
      continue;
    }
    std::string name(body.substr(pos + 1, len - 2));
    auto it = bindings.find(name);
    if (it == bindings.end()) {
      throw Error(ErrorCode::BadTemplate, "no binding for {" + name + "}");
    }
    out += it->second;
    pos += len - 1;
  }
  return out;
}

TemplateRegistry TemplateRegistry::load(const fs::path& asset_dir) {
  const fs::path dir = asset_dir / "templates";
  const fs::path index_path = dir / "index.json";
  if (!fs::is_regular_file(index_path)) {
    throw Error(ErrorCode::TemplateNotFound, "no template index at " + index_path.string());
  }
  json index = read_json_file(index_path);

  TemplateRegistry registry;
  try {
    const json& auditor = index.at("auditor");
    registry.auditor_.template_id = auditor.value("id", std::string("auditor"));
    registry.auditor_.body = load_template_file(dir, auditor, "body");
    registry.auditor_.schema_block = load_template_file(dir, auditor, "schema");

    for (const json& entry : index.value("finetune", json::array())) {
      FinetuneTemplate tmpl;
      tmpl.template_id = entry.at("id").get<std::string>();
      tmpl.dataset_tag = parse_dataset_tag(entry.at("dataset").get<std::string>());
      tmpl.prompt_body = load_template_file(dir, entry, "prompt");
      tmpl.completion_body = load_template_file(dir, entry, "completion");
      tmpl.topk = entry.value("topk", 1);
      registry.finetune_.emplace(tmpl.template_id, std::move(tmpl));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadTemplate, std::string("template index: ") + e.what());
  }
  return registry;
}

const FinetuneTemplate& TemplateRegistry::finetune(std::string_view template_id) const {
  auto it = finetune_.find(template_id);
  if (it == finetune_.end()) {
    throw Error(ErrorCode::TemplateNotFound, std::string(template_id));
  }
  return it->second;
}

std::vector<std::string> TemplateRegistry::finetune_ids() const {
  std::vector<std::string> ids;
  for (const auto& [id, _] : finetune_) ids.push_back(id);
  return ids;
}

fs::path default_asset_dir() {
  if (const char* env = std::getenv("SCAUDIT_ASSET_DIR"); env != nullptr && *env != '\0') {
    return env;
  }
  return SCAUDIT_DEFAULT_ASSET_DIR;
}

RenderedPrompt render_auditor_prompt(const TemplateRegistry& templates,
                                     const ContractRecord& record, int topk) {
  if (topk < 1) throw Error(ErrorCode::BadTopK, "topk must be >= 1, got " + std::to_string(topk));
  if (record.source_code.empty()) throw Error(ErrorCode::EmptySource, record.id);

  const PromptTemplate& tmpl = templates.auditor();
  RenderedPrompt prompt;
  prompt.contract_id = record.id;
  prompt.template_id = tmpl.template_id;
  prompt.topk = topk;
  prompt.text = substitute(tmpl.body, {{"topk", std::to_string(topk)},
                                       {"vuln_types", prompt_type_list()},
                                       {"schema", tmpl.schema_block},
                                       {"code", record.source_code}});
  return prompt;
}

FinetuneExample render_finetune_prompt(const TemplateRegistry& templates,
                                       const ContractRecord& record,
                                       std::string_view template_id) {
  const FinetuneTemplate& tmpl = templates.finetune(template_id);
  if (tmpl.dataset_tag != record.dataset_tag) {
    throw Error(ErrorCode::TemplateNotFound,
                "template '" + tmpl.template_id + "' is not registered for " +
                    std::string(to_string(record.dataset_tag)) + " records");
  }

  std::map<std::string, std::string> bindings = {
      {"topk", std::to_string(tmpl.topk)},
      {"vuln_types", prompt_type_list()},
      {"schema", templates.auditor().schema_block},
      {"code", record.source_code},
      {"contract_name", record.contract_name()},
      {"contract_name_json", json(record.contract_name()).dump()},
  };

  if (record.dataset_tag == DatasetTag::Cve) {
    if (record.labels.size() != 1) {
      throw Error(ErrorCode::MissingLabelField, record.id + ": cve record needs exactly one label");
    }
    const GroundTruthLabel& label = record.labels.front();
    if (normalize_function_name(label.function_name).empty()) {
      throw Error(ErrorCode::MissingLabelField, record.id + ": label lacks function_name");
    }
    const std::string vuln(display_name(label.vulnerability_type));
    bindings["function_name"] = label.function_name;
    bindings["function_name_json"] = json(label.function_name).dump();
    bindings["vulnerability"] = vuln;
    bindings["vulnerability_json"] = json(vuln).dump();
    bindings["description"] = label.description;
    bindings["description_json"] = json(label.description).dump();
  } else {
    json names = json::array();
    std::string joined;
    for (const auto& label : record.labels) {
      names.push_back(label.vulnerability_name);
      if (!joined.empty()) joined += ", ";
      joined += label.vulnerability_name;
    }
    bindings["vuln_list"] = joined;
    bindings["vuln_list_json"] = names.dump();
  }

  return FinetuneExample{substitute(tmpl.prompt_body, bindings),
                         substitute(tmpl.completion_body, bindings)};
}

}  // namespace scaudit
