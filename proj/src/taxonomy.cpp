#include "scaudit/taxonomy.hpp"

#include <algorithm>
#include <cctype>

#include "scaudit/error.hpp"
#include "scaudit/jsonl.hpp"

namespace scaudit {

std::string_view display_name(VulnType type) {
  switch (type) {
    case VulnType::IntegerOverflow: return "Integer Overflow";
    case VulnType::WrongLogic: return "Wrong Logic";
    case VulnType::BadRandomness: return "Bad Randomness";
    case VulnType::AccessControl: return "Access Control";
    case VulnType::TypoConstructor: return "Typo Constructor";
    case VulnType::TokenDevalue: return "Token Devalue";
    case VulnType::Other: return "Other";
  }
  return "Other";
}

std::optional<VulnType> parse_display_name(std::string_view name) {
  const std::string wanted = normalize_phrase(name);
  for (VulnType type : kAllVulnTypes) {
    if (normalize_phrase(display_name(type)) == wanted) return type;
  }
  return std::nullopt;
}

std::string prompt_type_list() {
  std::string out;
  for (VulnType type : kPromptVulnTypes) {
    if (!out.empty()) out += ", ";
    out += display_name(type);
  }
  return out;
}

std::string normalize_phrase(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  bool pending_space = false;
  for (unsigned char c : text) {
    if (std::isalnum(c)) {
      if (pending_space && !out.empty()) out += ' ';
      pending_space = false;
      out += static_cast<char>(std::tolower(c));
    } else {
      pending_space = true;
    }
  }
  return out;
}

AliasTable AliasTable::load(const std::filesystem::path& path) {
  return from_json_text(read_text(path));
}

AliasTable AliasTable::from_json_text(std::string_view text) {
  json doc = json::parse(text, nullptr, false);
  if (doc.is_discarded() || !doc.is_object()) {
    throw Error(ErrorCode::BadConfig, "alias table must be a JSON object");
  }
  AliasTable table;
  for (const auto& [phrase, target] : doc.items()) {
    if (!target.is_string()) {
      throw Error(ErrorCode::BadConfig, "alias '" + phrase + "' must map to a type name");
    }
    auto type = parse_display_name(target.get<std::string>());
    if (!type) {
      throw Error(ErrorCode::BadConfig,
                  "alias '" + phrase + "' targets unknown type '" + target.get<std::string>() + "'");
    }
    table.add(phrase, *type);
  }
  return table;
}

void AliasTable::add(std::string_view phrase, VulnType type) {
  std::string key = normalize_phrase(phrase);
  if (key.empty()) return;
  auto it = std::find_if(aliases_.begin(), aliases_.end(),
                         [&](const auto& entry) { return entry.first == key; });
  if (it != aliases_.end()) {
    it->second = type;
  } else {
    aliases_.emplace_back(std::move(key), type);
  }
}

std::optional<VulnType> AliasTable::match(std::string_view text) const {
  const std::string haystack = " " + normalize_phrase(text) + " ";
  const std::pair<std::string, VulnType>* best = nullptr;
  for (const auto& entry : aliases_) {
    if (haystack.find(" " + entry.first + " ") == std::string::npos) continue;
    if (best == nullptr || entry.first.size() > best->first.size() ||
        (entry.first.size() == best->first.size() && entry.first < best->first)) {
      best = &entry;
    }
  }
  if (best == nullptr) return std::nullopt;
  return best->second;
}

VulnType AliasTable::lookup(std::string_view text) const {
  return match(text).value_or(VulnType::Other);
}

}  // namespace scaudit
