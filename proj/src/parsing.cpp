#include "scaudit/parsing.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <set>

#include "scaudit/error.hpp"

namespace scaudit {

std::string_view to_string(ParseStatus status) {
  switch (status) {
    case ParseStatus::Parsed: return "parsed";
    case ParseStatus::Empty: return "empty";
    case ParseStatus::ParseFailure: return "parse_failure";
    case ParseStatus::BackendFailure: return "backend_failure";
  }
  return "parse_failure";
}

ParseStatus parse_status_from_string(std::string_view text) {
  if (text == "parsed") return ParseStatus::Parsed;
  if (text == "empty") return ParseStatus::Empty;
  if (text == "parse_failure") return ParseStatus::ParseFailure;
  if (text == "backend_failure") return ParseStatus::BackendFailure;
  throw Error(ErrorCode::BadRunDirectory, "unknown parse status '" + std::string(text) + "'");
}

namespace {

// End (exclusive) of the brace-balanced span starting at `open`, honouring
// JSON string literals; npos when the braces never balance.
std::size_t balanced_end(std::string_view text, std::size_t open) {
  int depth = 0;
  bool in_string = false;
  bool escaped = false;
  for (std::size_t i = open; i < text.size(); ++i) {
    const char c = text[i];
    if (in_string) {
      if (escaped) {
        escaped = false;
      } else if (c == '\\') {
        escaped = true;
      } else if (c == '"') {
        in_string = false;
      }
      continue;
    }
    if (c == '"') {
      in_string = true;
    } else if (c == '{') {
      ++depth;
    } else if (c == '}') {
      if (--depth == 0) return i + 1;
    }
  }
  return std::string_view::npos;
}

std::optional<Extraction> findings_from_object(const json& object) {
  const json& list = object.at("output_list");
  Extraction result;
  if (!list.is_array()) {
    result.status = ParseStatus::ParseFailure;
    return result;
  }
  for (const json& item : list) {
    if (!item.is_object()) return Extraction{};
    Finding finding;
    for (auto [key, field] : {std::pair{"function_name", &finding.function_name},
                              std::pair{"vulnerability", &finding.vulnerability},
                              std::pair{"reason", &finding.reason}}) {
      auto it = item.find(key);
      if (it == item.end() || !it->is_string()) return Extraction{};
      *field = it->get<std::string>();
    }
    result.findings.push_back(std::move(finding));
  }
  result.status = result.findings.empty() ? ParseStatus::Empty : ParseStatus::Parsed;
  return result;
}

}  // namespace

Extraction extract_findings(std::string_view raw_text) {
  try {
    for (std::size_t open = raw_text.find('{'); open != std::string_view::npos;
         open = raw_text.find('{', open + 1)) {
      const std::size_t end = balanced_end(raw_text, open);
      if (end == std::string_view::npos) continue;
      json candidate = json::parse(raw_text.substr(open, end - open), nullptr, false);
      if (candidate.is_discarded() || !candidate.is_object() || !candidate.contains("output_list")) {
        continue;
      }
      return findings_from_object(candidate).value_or(Extraction{});
    }
  } catch (...) {
    // Allocation failure on hostile input; report as unparseable.
  }
  return Extraction{};
}

std::string normalize_function_name(std::string_view name) {
  std::string s;
  s.reserve(name.size());
  for (char c : name) {
    if (c == '`' || c == '"' || c == '\'') continue;
    s += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  }
  if (auto paren = s.find('('); paren != std::string::npos) s.resize(paren);

  auto trim = [](std::string& t) {
    const auto first = t.find_first_not_of(" \t\r\n");
    if (first == std::string::npos) {
      t.clear();
      return;
    }
    t = t.substr(first, t.find_last_not_of(" \t\r\n") - first + 1);
  };
  trim(s);
  if (s.starts_with("function ") || s.starts_with("function\t")) {
    s.erase(0, 9);
    trim(s);
  }
  std::size_t qualifier = std::string::npos;
  if (auto dot = s.rfind('.'); dot != std::string::npos) qualifier = dot + 1;
  if (auto colons = s.rfind("::"); colons != std::string::npos &&
                                   (qualifier == std::string::npos || colons + 2 > qualifier)) {
    qualifier = colons + 2;
  }
  if (qualifier != std::string::npos) s.erase(0, qualifier);
  trim(s);
  return s;
}

NormalizedFinding canonicalize(const Finding& finding, const AliasTable& aliases) {
  std::optional<VulnType> type = parse_display_name(finding.vulnerability);
  if (!type) type = aliases.match(finding.vulnerability);
  return NormalizedFinding{normalize_function_name(finding.function_name),
                           type.value_or(VulnType::Other), finding.reason};
}

std::vector<NormalizedFinding> dedupe(std::span<const NormalizedFinding> findings) {
  std::set<std::pair<std::string, VulnType>> seen;
  std::vector<NormalizedFinding> out;
  for (const auto& finding : findings) {
    if (seen.emplace(finding.function_key, finding.vuln_type).second) out.push_back(finding);
  }
  return out;
}

json AuditRun::to_json() const {
  json items = json::array();
  for (const auto& f : findings) {
    items.push_back(json{{"function_key", f.function_key},
                         {"vuln_type", std::string(display_name(f.vuln_type))},
                         {"description", f.description}});
  }
  return json{{"backend_id", backend_id},
              {"contract_id", contract_id},
              {"status", std::string(to_string(status))},
              {"findings", std::move(items)},
              {"raw_ref", raw_ref}};
}

AuditRun AuditRun::from_json(const json& doc) {
  try {
    AuditRun run;
    run.backend_id = doc.at("backend_id").get<std::string>();
    run.contract_id = doc.at("contract_id").get<std::string>();
    run.status = parse_status_from_string(doc.at("status").get<std::string>());
    run.raw_ref = doc.value("raw_ref", std::string());
    for (const json& item : doc.at("findings")) {
      auto type = parse_display_name(item.at("vuln_type").get<std::string>());
      if (!type) throw Error(ErrorCode::BadRunDirectory, "unknown vuln_type in audit run");
      run.findings.push_back(NormalizedFinding{item.at("function_key").get<std::string>(), *type,
                                               item.value("description", std::string())});
    }
    return run;
  } catch (const json::exception& e) {
    throw Error(ErrorCode::BadRunDirectory, std::string("audit run record: ") + e.what());
  }
}

AuditRun parse_completion(std::string backend_id, std::string contract_id, std::string_view raw_text,
                          std::string prompt_hash, const AliasTable& aliases) {
  Extraction extraction = extract_findings(raw_text);
  AuditRun run;
  run.backend_id = std::move(backend_id);
  run.contract_id = std::move(contract_id);
  run.status = extraction.status;
  run.raw_ref = std::move(prompt_hash);
  std::vector<NormalizedFinding> normalized;
  normalized.reserve(extraction.findings.size());
  for (const auto& finding : extraction.findings) {
    normalized.push_back(canonicalize(finding, aliases));
  }
  run.findings = dedupe(normalized);
  return run;
}

AuditRun backend_failure_run(std::string backend_id, std::string contract_id) {
  AuditRun run;
  run.backend_id = std::move(backend_id);
  run.contract_id = std::move(contract_id);
  run.status = ParseStatus::BackendFailure;
  return run;
}

}  // namespace scaudit
