#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "hopqa/util.hpp"

namespace hopqa::curriculum {

enum class Strategy { pvi_ascending, pvi_reverse, random_within_level, global_random };

std::string to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);

struct LabeledItem {
  std::string id;
  std::string difficulty;  // "unset" when unknown
};

struct Split {
  std::vector<std::string> train;  // sorted by id
  std::vector<std::string> test;   // sorted by id
  std::vector<std::string> warnings;
};

// Seeded, stratified split. Every difficulty level with at least two items
// contributes to both sides; a level with one item stays in train.
Split split(const std::vector<LabeledItem>& items, double ratio, std::uint64_t seed);

struct PviInfo {
  double pvi_bits = 0.0;
  std::string difficulty;
};

// Orders train ids. PVI strategies need an entry per id and throw Error
// listing the missing ids otherwise.
std::vector<std::string> order(const std::vector<std::string>& train_ids, const std::map<std::string, PviInfo>& pvi,
                               Strategy strategy, std::uint64_t seed);

struct TrainerHints {
  int epochs = 3;
  double learning_rate_large = 5e-4;  // models above 1B parameters
  double learning_rate_small = 5e-5;
  int batch_size = 16;
  int max_tokens = 256;
  int lora_rank = 8;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double weight_decay = 0.1;

  json to_json() const;
  static TrainerHints from_json(const json& j);
  friend bool operator==(const TrainerHints&, const TrainerHints&) = default;
};

struct Manifest {
  Strategy strategy = Strategy::pvi_ascending;
  std::uint64_t seed = 0;
  double subset_fraction = 1.0;
  std::size_t full_train_size = 0;
  std::vector<std::string> train_order;
  std::vector<std::string> test_ids;  // sorted
  TrainerHints trainer_hints;

  friend bool operator==(const Manifest&, const Manifest&) = default;
};

Manifest make_manifest(Strategy strategy, std::uint64_t seed, std::vector<std::string> train_order,
                       std::vector<std::string> test_ids);

// Curriculum prefix: keeps the first ceil(f' * full_train_size) ids where
// f' = subset_fraction * fraction.
Manifest subset(const Manifest& m, double fraction);

// Invariant violations, empty when the manifest is consistent.
std::vector<std::string> check_manifest(const Manifest& m);

std::string serialize_manifest(const Manifest& m);
void export_manifest(const Manifest& m, const std::filesystem::path& path);
Manifest parse_manifest(std::string_view text);
Manifest import_manifest(const std::filesystem::path& path);

}  // namespace hopqa::curriculum
