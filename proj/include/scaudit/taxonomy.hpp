#pragma once

#include <array>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace scaudit {

// The closed set the auditor prompt restricts models to, plus Other for
// free text that maps to none of them.
enum class VulnType {
  IntegerOverflow,
  WrongLogic,
  BadRandomness,
  AccessControl,
  TypoConstructor,
  TokenDevalue,
  Other,
};

inline constexpr std::array<VulnType, 6> kPromptVulnTypes = {
    VulnType::IntegerOverflow, VulnType::WrongLogic,      VulnType::BadRandomness,
    VulnType::AccessControl,   VulnType::TypoConstructor, VulnType::TokenDevalue,
};

inline constexpr std::array<VulnType, 7> kAllVulnTypes = {
    VulnType::IntegerOverflow, VulnType::WrongLogic,   VulnType::BadRandomness,
    VulnType::AccessControl,   VulnType::TypoConstructor, VulnType::TokenDevalue,
    VulnType::Other,
};

// "Integer Overflow", "Wrong Logic", ... and "Other".
std::string_view display_name(VulnType type);

// Exact, case-insensitive match on a display name.
std::optional<VulnType> parse_display_name(std::string_view name);

// "Integer Overflow, Wrong Logic, Bad Randomness, Access Control, Typo Constructor, Token Devalue"
std::string prompt_type_list();

// Lowercases and collapses every run of non-alphanumerics to one space.
std::string normalize_phrase(std::string_view text);

// Maps free-text vulnerability phrases onto VulnType by longest whole-word
// alias match. Aliases are stored normalized.
class AliasTable {
 public:
  AliasTable() = default;

  // Asset format: JSON object {"phrase": "Display Name", ...}.
  static AliasTable load(const std::filesystem::path& path);
  static AliasTable from_json_text(std::string_view text);

  void add(std::string_view phrase, VulnType type);

  VulnType lookup(std::string_view text) const;

  // Like lookup, but nullopt instead of Other when nothing matches.
  std::optional<VulnType> match(std::string_view text) const;

  std::size_t size() const { return aliases_.size(); }

 private:
  std::vector<std::pair<std::string, VulnType>> aliases_;
};

}  // namespace scaudit
