#include "phenovlp/common/jsonl.hpp"

#include <fstream>
#include <sstream>

#include "phenovlp/common/errors.hpp"

namespace phenovlp {

namespace fs = std::filesystem;

void read_jsonl(const fs::path& path, const std::function<void(const json&, std::size_t)>& fn) {
    std::ifstream in(path);
    if (!in) throw InputError("cannot open " + path.string());
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json obj;
        try {
            obj = json::parse(line);
        } catch (const json::parse_error& e) {
            throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
        fn(obj, lineno);
    }
}

void write_jsonl(const fs::path& path, const std::vector<json>& rows) {
    std::ostringstream out;
    for (const auto& row : rows) out << row.dump() << '\n';
    write_text(path, out.str());
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw InputError(path.string() + ": " + e.what());
    }
}

void write_json(const fs::path& path, const json& value) { write_text(path, value.dump(2) + "\n"); }

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw InputError("cannot write " + path.string());
    out << contents;
}

}  // namespace phenovlp
