#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include <json.hpp>

namespace phenovlp {

using json = nlohmann::json;

// Calls fn(object, line_number) for every non-blank line. Parse failures throw
// InputError with the file and line.
void read_jsonl(const std::filesystem::path& path,
                const std::function<void(const json&, std::size_t)>& fn);

void write_jsonl(const std::filesystem::path& path, const std::vector<json>& rows);

json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const json& value);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, const std::string& contents);

}  // namespace phenovlp
