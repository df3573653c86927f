#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace phenovlp::text {

// ASCII case fold; bytes >= 0x80 are passed through untouched.
std::string fold_case(std::string_view s);

// Case fold, trim, and collapse every run of whitespace to a single space.
std::string normalize(std::string_view s);

std::string trim(std::string_view s);

// Letters, digits and any non-ASCII byte count as word characters.
inline bool is_word_char(char c) {
    const auto u = static_cast<unsigned char>(c);
    return u >= 0x80 || (u >= '0' && u <= '9') || (u >= 'a' && u <= 'z') || (u >= 'A' && u <= 'Z');
}

std::vector<std::string> split_whitespace(std::string_view s);

// Lowercased word tokens, punctuation dropped.
std::vector<std::string> word_tokens(std::string_view s);

// Keep the first max_tokens whitespace-separated tokens.
std::string truncate_tokens(std::string_view s, std::size_t max_tokens);

std::vector<std::string> split(std::string_view s, char sep);

std::string join(const std::vector<std::string>& parts, std::string_view sep);

bool starts_with(std::string_view s, std::string_view prefix);

// Replace every occurrence of `from` with `to`.
std::string replace_all(std::string s, std::string_view from, std::string_view to);

}  // namespace phenovlp::text
