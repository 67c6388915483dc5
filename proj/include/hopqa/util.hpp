#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

namespace hopqa {

using json = nlohmann::json;

// Hashing

std::string sha256_hex(std::string_view data);
std::uint64_t fnv1a64(std::string_view data);
std::uint64_t splitmix64(std::uint64_t x);

// Short stable identifier: first 16 hex chars of SHA-256.
inline std::string short_hash(std::string_view data) { return sha256_hex(data).substr(0, 16); }

// Text

std::string to_lower(std::string_view s);
std::string trim(std::string_view s);
std::string collapse_whitespace(std::string_view s);
std::vector<std::string> split_whitespace(std::string_view s);
std::vector<std::string> split_lines(std::string_view s);
bool contains_icase(std::string_view haystack, std::string_view needle);
// Case-insensitive match of `needle` bounded by non-alphanumeric characters.
bool contains_word_icase(std::string_view haystack, std::string_view needle);
bool starts_with_icase(std::string_view s, std::string_view prefix);
// Lowercased alphanumeric words in order of appearance.
std::vector<std::string> word_tokens(std::string_view s);

// Files

std::string read_file(const std::filesystem::path& path);
// Write to a sibling temp file then rename over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view content);
std::vector<json> read_jsonl(const std::filesystem::path& path);
std::string to_jsonl(const std::vector<json>& rows);

// Time

// Current UTC time as "YYYY-MM-DDTHH:MM:SSZ".
std::string utc_now_iso();

// Randomness. std::shuffle and std::uniform_int_distribution are
// implementation-defined; these are not, so seeded outputs are portable.

class SeededRng {
 public:
  explicit SeededRng(std::uint64_t seed) : engine_(seed) {}
  std::uint64_t next() { return engine_(); }
  // Uniform in [0, bound).
  std::uint64_t below(std::uint64_t bound);
  double unit() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::mt19937_64 engine_;
};

// ceil(fraction * n) with a small tolerance for binary rounding (0.7 * 10).
std::size_t ceil_fraction(double fraction, std::size_t n);

}  // namespace hopqa
