#include "hopqa/curriculum.hpp"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <set>

#include "hopqa/error.hpp"

namespace hopqa::curriculum {

std::string to_string(Strategy s) {
  switch (s) {
    case Strategy::pvi_ascending:
      return "pvi_ascending";
    case Strategy::pvi_reverse:
      return "pvi_reverse";
    case Strategy::random_within_level:
      return "random_within_level";
    case Strategy::global_random:
      return "global_random";
  }
  return "unknown";
}

Strategy strategy_from_string(std::string_view s) {
  for (auto st : {Strategy::pvi_ascending, Strategy::pvi_reverse, Strategy::random_within_level,
                  Strategy::global_random}) {
    if (to_string(st) == s) return st;
  }
  throw Error("unknown curriculum strategy '" + std::string(s) + "'");
}

Split split(const std::vector<LabeledItem>& items, double ratio, std::uint64_t seed) {
  if (!(ratio > 0.0 && ratio < 1.0)) throw Error("split ratio must be in (0, 1)");
  if (items.size() < 2) throw Error("split needs at least 2 items");

  std::map<std::string, std::vector<std::string>> levels;
  std::set<std::string> ids;
  for (const auto& it : items) {
    if (!ids.insert(it.id).second) throw Error("duplicate item id " + it.id);
    levels[it.difficulty].push_back(it.id);
  }

  const std::size_t n = items.size();
  std::size_t n_test = n - std::min(n, ceil_fraction(ratio, n));
  n_test = std::clamp<std::size_t>(n_test, 1, n - 1);

  Split out;
  SeededRng rng(seed);
  std::map<std::string, std::size_t> alloc;
  std::vector<std::string> eligible;
  for (auto& [level, members] : levels) {
    std::sort(members.begin(), members.end());
    rng.shuffle(members);
    alloc[level] = 0;
    if (members.size() >= 2) {
      eligible.push_back(level);
    } else {
      out.warnings.push_back("difficulty level '" + level + "' has a single item; it stays in train");
    }
  }
  std::size_t assigned = 0;
  if (n_test >= eligible.size()) {
    for (const auto& l : eligible) alloc[l] = 1;
    assigned = eligible.size();
  }
  // Hand out the rest one at a time to the level furthest below its
  // proportional share, keeping at least one item per level in train.
  while (assigned < n_test) {
    std::string pick;
    double best_gap = -1e300;
    for (const auto& l : eligible) {
      const auto size = levels[l].size();
      if (alloc[l] + 1 >= size) continue;
      const double quota = static_cast<double>(n_test) * static_cast<double>(size) / static_cast<double>(n);
      const double gap = quota - static_cast<double>(alloc[l]);
      if (gap > best_gap) {
        best_gap = gap;
        pick = l;
      }
    }
    if (pick.empty()) break;
    ++alloc[pick];
    ++assigned;
  }
  for (const auto& [level, members] : levels) {
    for (std::size_t i = 0; i < members.size(); ++i) (i < alloc[level] ? out.test : out.train).push_back(members[i]);
  }
  std::sort(out.train.begin(), out.train.end());
  std::sort(out.test.begin(), out.test.end());
  for (const auto& w : out.warnings) spdlog::warn("{}", w);
  return out;
}

std::vector<std::string> order(const std::vector<std::string>& train_ids, const std::map<std::string, PviInfo>& pvi,
                               Strategy strategy, std::uint64_t seed) {
  std::vector<std::string> ids = train_ids;
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw Error("duplicate train ids");

  if (strategy == Strategy::global_random) {
    SeededRng rng(seed);
    rng.shuffle(ids);
    return ids;
  }

  std::vector<std::string> missing;
  for (const auto& id : ids) {
    if (!pvi.count(id)) missing.push_back(id);
  }
  if (!missing.empty()) {
    std::string msg = "missing PVI records for:";
    for (const auto& id : missing) msg += " " + id;
    throw Error(msg);
  }

  std::stable_sort(ids.begin(), ids.end(), [&](const std::string& a, const std::string& b) {
    return pvi.at(a).pvi_bits < pvi.at(b).pvi_bits;
  });
  if (strategy == Strategy::pvi_ascending) return ids;
  if (strategy == Strategy::pvi_reverse) return {ids.rbegin(), ids.rend()};

  // random_within_level: shuffle each level's members and put them back
  // into the positions that level occupies in the ascending order.
  std::vector<std::string> level_order;
  std::map<std::string, std::vector<std::string>> members;
  for (const auto& id : ids) {
    const auto& level = pvi.at(id).difficulty;
    if (!members.count(level)) level_order.push_back(level);
    members[level].push_back(id);
  }
  SeededRng rng(seed);
  for (const auto& level : level_order) rng.shuffle(members[level]);
  std::map<std::string, std::size_t> cursor;
  std::vector<std::string> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    const auto& level = pvi.at(id).difficulty;
    out.push_back(members[level][cursor[level]++]);
  }
  return out;
}

json TrainerHints::to_json() const {
  return {{"epochs", epochs},
          {"learning_rate_large", learning_rate_large},
          {"learning_rate_small", learning_rate_small},
          {"batch_size", batch_size},
          {"max_tokens", max_tokens},
          {"lora_rank", lora_rank},
          {"adam_beta1", adam_beta1},
          {"adam_beta2", adam_beta2},
          {"weight_decay", weight_decay}};
}

TrainerHints TrainerHints::from_json(const json& j) {
  TrainerHints h;
  h.epochs = j.at("epochs").get<int>();
  h.learning_rate_large = j.at("learning_rate_large").get<double>();
  h.learning_rate_small = j.at("learning_rate_small").get<double>();
  h.batch_size = j.at("batch_size").get<int>();
  h.max_tokens = j.at("max_tokens").get<int>();
  h.lora_rank = j.at("lora_rank").get<int>();
  h.adam_beta1 = j.at("adam_beta1").get<double>();
  h.adam_beta2 = j.at("adam_beta2").get<double>();
  h.weight_decay = j.at("weight_decay").get<double>();
  return h;
}

Manifest make_manifest(Strategy strategy, std::uint64_t seed, std::vector<std::string> train_order,
                       std::vector<std::string> test_ids) {
  Manifest m;
  m.strategy = strategy;
  m.seed = seed;
  m.full_train_size = train_order.size();
  m.train_order = std::move(train_order);
  m.test_ids = std::move(test_ids);
  std::sort(m.test_ids.begin(), m.test_ids.end());
  return m;
}

Manifest subset(const Manifest& m, double fraction) {
  if (!(fraction > 0.0 && fraction <= 1.0)) throw Error("subset fraction must be in (0, 1]");
  Manifest out = m;
  out.subset_fraction = m.subset_fraction * fraction;
  const std::size_t keep = std::min(ceil_fraction(out.subset_fraction, m.full_train_size), m.train_order.size());
  out.train_order.resize(keep);
  return out;
}

std::vector<std::string> check_manifest(const Manifest& m) {
  std::vector<std::string> bad;
  if (!(m.subset_fraction > 0.0 && m.subset_fraction <= 1.0)) bad.push_back("subset_fraction out of (0, 1]");
  std::set<std::string> train(m.train_order.begin(), m.train_order.end());
  if (train.size() != m.train_order.size()) bad.push_back("train_order has duplicates");
  std::set<std::string> test(m.test_ids.begin(), m.test_ids.end());
  if (test.size() != m.test_ids.size()) bad.push_back("test_ids has duplicates");
  for (const auto& id : m.test_ids) {
    if (train.count(id)) {
      bad.push_back("id " + id + " is in both splits");
      break;
    }
  }
  if (m.train_order.size() != ceil_fraction(m.subset_fraction, m.full_train_size)) {
    bad.push_back("train_order size " + std::to_string(m.train_order.size()) + " != ceil(subset_fraction * " +
                  std::to_string(m.full_train_size) + ")");
  }
  return bad;
}

std::string serialize_manifest(const Manifest& m) {
  std::vector<json> rows;
  rows.push_back({{"strategy", to_string(m.strategy)},
                  {"seed", m.seed},
                  {"subset_fraction", m.subset_fraction},
                  {"full_train_size", m.full_train_size},
                  {"trainer_hints", m.trainer_hints.to_json()}});
  std::size_t index = 0;
  for (const auto& id : m.train_order) rows.push_back({{"id", id}, {"order_index", index++}, {"split", "train"}});
  for (const auto& id : m.test_ids) rows.push_back({{"id", id}, {"order_index", index++}, {"split", "test"}});
  return to_jsonl(rows);
}

void export_manifest(const Manifest& m, const std::filesystem::path& path) {
  auto bad = check_manifest(m);
  if (!bad.empty()) throw ValidationError(bad);
  write_file_atomic(path, serialize_manifest(m));
}

Manifest parse_manifest(std::string_view text) {
  std::vector<json> rows;
  for (const auto& line : split_lines(text)) {
    if (!trim(line).empty()) rows.push_back(json::parse(line));
  }
  if (rows.empty()) throw Error("manifest is empty");
  Manifest m;
  try {
    const auto& h = rows.front();
    m.strategy = strategy_from_string(h.at("strategy").get<std::string>());
    m.seed = h.at("seed").get<std::uint64_t>();
    m.subset_fraction = h.at("subset_fraction").get<double>();
    m.full_train_size = h.at("full_train_size").get<std::size_t>();
    m.trainer_hints = TrainerHints::from_json(h.at("trainer_hints"));
    std::vector<std::pair<std::size_t, std::string>> train;
    std::size_t expected = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
      const auto& r = rows[i];
      const auto index = r.at("order_index").get<std::size_t>();
      if (index != expected++) throw Error("order_index is not dense at line " + std::to_string(i + 1));
      const auto split = r.at("split").get<std::string>();
      if (split == "train") {
        if (!m.test_ids.empty()) throw Error("train record after test records");
        m.train_order.push_back(r.at("id").get<std::string>());
      } else if (split == "test") {
        m.test_ids.push_back(r.at("id").get<std::string>());
      } else {
        throw Error("unknown split '" + split + "'");
      }
    }
  } catch (const json::exception& e) {
    throw Error(std::string("malformed manifest: ") + e.what());
  }
  auto bad = check_manifest(m);
  if (!bad.empty()) throw ValidationError(bad);
  return m;
}

Manifest import_manifest(const std::filesystem::path& path) { return parse_manifest(read_file(path)); }

}  // namespace hopqa::curriculum
