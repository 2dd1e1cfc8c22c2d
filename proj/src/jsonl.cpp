#include "scaudit/jsonl.hpp"

#include <atomic>
#include <fstream>
#include <sstream>
#include <thread>

#include "scaudit/error.hpp"

namespace scaudit {

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  }
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

void write_text_atomic(const fs::path& path, std::string_view content) {
  static std::atomic<unsigned> counter{0};
  std::error_code ec;
  if (path.has_parent_path()) {
    fs::create_directories(path.parent_path(), ec);
  }
  const auto tid = std::hash<std::thread::id>{}(std::this_thread::get_id());
  fs::path tmp = path;
  tmp += ".tmp." + std::to_string(tid) + "." + std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) {
      throw Error(ErrorCode::WriteFailure, "cannot open " + tmp.string());
    }
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    out.flush();
    if (!out) {
      throw Error(ErrorCode::WriteFailure, "short write to " + tmp.string());
    }
  }
  fs::rename(tmp, path, ec);
  if (ec) {
    fs::remove(tmp, ec);
    throw Error(ErrorCode::WriteFailure, "cannot rename onto " + path.string());
  }
}

std::vector<json> read_jsonl(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::MissingFile, "cannot open " + path.string());
  }
  std::vector<json> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    json value = json::parse(line, nullptr, false);
    if (value.is_discarded()) {
      throw Error(ErrorCode::BadManifest,
                  path.string() + ":" + std::to_string(line_no) + ": malformed record");
    }
    records.push_back(std::move(value));
  }
  return records;
}

std::string to_jsonl(std::span<const json> records) {
  std::string out;
  for (const auto& record : records) {
    out += record.dump();
    out += '\n';
  }
  return out;
}

void write_jsonl_atomic(const fs::path& path, std::span<const json> records) {
  write_text_atomic(path, to_jsonl(records));
}

json read_json_file(const fs::path& path) {
  json value = json::parse(read_text(path), nullptr, false);
  if (value.is_discarded()) {
    throw Error(ErrorCode::BadConfig, path.string() + ": malformed JSON");
  }
  return value;
}

}  // namespace scaudit
