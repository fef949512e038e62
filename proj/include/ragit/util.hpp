#pragma once

#include <cstdint>
#include <filesystem>
#include <initializer_list>
#include <string>
#include <string_view>
#include <vector>

namespace ragit {

// Hashing -------------------------------------------------------------------

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

/// FNV-1a 64-bit; platform independent, used for stub backends and feature hashing.
constexpr std::uint64_t fnv1a64(std::string_view bytes,
                                std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

/// Stable identifier: `prefix` + first 16 hex chars of sha256 over the
/// unit-separator-joined parts.
std::string stable_id(std::string_view prefix, std::initializer_list<std::string_view> parts);

// Text ----------------------------------------------------------------------

bool is_valid_utf8(std::string_view bytes);

struct WordSpan {
  std::size_t begin = 0;
  std::size_t end = 0;
};

/// Whitespace-delimited words with their byte offsets.
std::vector<WordSpan> split_words(std::string_view text);
std::size_t word_count(std::string_view text);

std::string to_lower_ascii(std::string_view s);
std::string_view trim(std::string_view s);

/// Lowercased alphanumeric tokens; punctuation separates tokens.
std::vector<std::string> alnum_tokens(std::string_view text);

/// alnum_tokens minus stopwords and tokens shorter than 2 characters.
std::vector<std::string> content_words(std::string_view text);
bool is_stopword(std::string_view lowered);

std::vector<std::string> split_lines(std::string_view text);
std::string join(const std::vector<std::string>& parts, std::string_view sep);
bool starts_with(std::string_view s, std::string_view prefix);
std::string replace_all(std::string s, std::string_view from, std::string_view to);

// Files ---------------------------------------------------------------------

std::string read_file(const std::filesystem::path& path);
/// Writes via a temp file + rename so readers never see a partial file.
void write_file(const std::filesystem::path& path, std::string_view bytes);

/// UTC ISO-8601 timestamp with second precision.
std::string utc_now_iso8601();

}  // namespace ragit
