#pragma once

#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "scaudit/jsonl.hpp"
#include "scaudit/taxonomy.hpp"

namespace scaudit {

// One entry of the auditor output schema, verbatim.
struct Finding {
  std::string function_name;
  std::string vulnerability;
  std::string reason;

  bool operator==(const Finding&) const = default;
};

enum class ParseStatus { Parsed, Empty, ParseFailure, BackendFailure };

std::string_view to_string(ParseStatus status);
ParseStatus parse_status_from_string(std::string_view text);

struct Extraction {
  std::vector<Finding> findings;
  ParseStatus status = ParseStatus::ParseFailure;
};

// Finds the first well-formed JSON object carrying a top-level "output_list"
// anywhere in the text (prose and code fences around it are ignored). Never
// throws; returns ParseFailure when no such object exists or an entry lacks
// one of function_name / vulnerability / reason.
Extraction extract_findings(std::string_view raw_text);

struct NormalizedFinding {
  std::string function_key;
  VulnType vuln_type = VulnType::Other;
  std::string description;

  bool operator==(const NormalizedFinding&) const = default;
};

// Lowercase, trimmed, with backticks, a leading `function` keyword,
// contract qualifiers and any parameter list removed.
std::string normalize_function_name(std::string_view name);

NormalizedFinding canonicalize(const Finding& finding, const AliasTable& aliases);

// First occurrence of each (function_key, vuln_type) wins.
std::vector<NormalizedFinding> dedupe(std::span<const NormalizedFinding> findings);

struct AuditRun {
  std::string backend_id;
  std::string contract_id;
  ParseStatus status = ParseStatus::ParseFailure;
  std::vector<NormalizedFinding> findings;
  // prompt_hash of the completion this run was parsed from; empty on backend failure.
  std::string raw_ref;

  json to_json() const;
  static AuditRun from_json(const json& doc);
  bool operator==(const AuditRun&) const = default;
};

// Extract, canonicalize and dedupe one completion.
AuditRun parse_completion(std::string backend_id, std::string contract_id, std::string_view raw_text,
                          std::string prompt_hash, const AliasTable& aliases);

AuditRun backend_failure_run(std::string backend_id, std::string contract_id);

}  // namespace scaudit
