#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

namespace phenovlp {

// 64-bit FNV-1a. Stable across platforms and runs; used for token ids,
// teacher-cache keys and artifact content hashes.
constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
constexpr std::uint64_t kFnvPrime = 0x100000001b3ULL;

constexpr std::uint64_t fnv1a(std::string_view data, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : data) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

std::string hex64(std::uint64_t v);

// Content hash of a file, hex encoded. Throws InputError if unreadable.
std::string hash_file(const std::filesystem::path& path);

// Hash of a directory tree: relative paths and file contents, in sorted order.
std::string hash_path(const std::filesystem::path& path);

}  // namespace phenovlp
