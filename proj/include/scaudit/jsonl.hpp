#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace scaudit {

using json = nlohmann::json;
namespace fs = std::filesystem;

std::string read_text(const fs::path& path);

// Writes to a sibling temp file and renames over the target.
void write_text_atomic(const fs::path& path, std::string_view content);

// Blank lines are skipped; a malformed line raises BadManifest naming the line number.
std::vector<json> read_jsonl(const fs::path& path);

std::string to_jsonl(std::span<const json> records);

void write_jsonl_atomic(const fs::path& path, std::span<const json> records);

json read_json_file(const fs::path& path);

}  // namespace scaudit
