#include "phenovlp/common/hash.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <vector>

#include "phenovlp/common/errors.hpp"

namespace phenovlp {

std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

namespace {

std::uint64_t hash_file_raw(const std::filesystem::path& path, std::uint64_t h) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot read " + path.string());
    std::array<char, 1 << 16> buf{};
    while (in) {
        in.read(buf.data(), buf.size());
        h = fnv1a(std::string_view(buf.data(), static_cast<std::size_t>(in.gcount())), h);
    }
    return h;
}

}  // namespace

std::string hash_file(const std::filesystem::path& path) {
    return hex64(hash_file_raw(path, kFnvOffset));
}

std::string hash_path(const std::filesystem::path& path) {
    namespace fs = std::filesystem;
    if (!fs::exists(path)) throw InputError("missing path " + path.string());
    if (!fs::is_directory(path)) return hash_file(path);

    std::vector<fs::path> files;
    for (const auto& entry : fs::recursive_directory_iterator(path)) {
        if (entry.is_regular_file()) files.push_back(entry.path());
    }
    std::sort(files.begin(), files.end());
    std::uint64_t h = kFnvOffset;
    for (const auto& f : files) {
        h = fnv1a(fs::relative(f, path).generic_string(), h);
        h = fnv1a(std::string_view("\0", 1), h);
        h = hash_file_raw(f, h);
    }
    return hex64(h);
}

}  // namespace phenovlp
