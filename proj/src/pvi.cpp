#include "hopqa/pvi.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

#include "hopqa/gateway.hpp"

namespace hopqa::pvi {

json to_json(const PviRecord& r) {
  json deltas = json::array();
  for (const auto& d : r.token_deltas) deltas.push_back({{"token", d.text}, {"delta_bits", d.delta_bits}});
  return {{"item_id", r.item_id},
          {"pvi_bits", r.pvi_bits},
          {"normalized_pvi", r.normalized_pvi},
          {"difficulty", r.difficulty},
          {"scorer_model_id", r.scorer_model_id},
          {"token_deltas", deltas}};
}

PviRecord record_from_json(const json& j) {
  PviRecord r;
  r.item_id = j.at("item_id").get<std::string>();
  r.pvi_bits = j.at("pvi_bits").get<double>();
  r.normalized_pvi = j.at("normalized_pvi").get<double>();
  r.difficulty = j.at("difficulty").get<std::string>();
  r.scorer_model_id = j.at("scorer_model_id").get<std::string>();
  for (const auto& d : j.at("token_deltas")) {
    r.token_deltas.push_back({d.at("token").get<std::string>(), d.at("delta_bits").get<double>()});
  }
  return r;
}

std::vector<PviRecord> read_records(const std::filesystem::path& path) {
  std::vector<PviRecord> out;
  for (const auto& row : read_jsonl(path)) {
    try {
      out.push_back(record_from_json(row));
    } catch (const json::exception& e) {
      throw Error(path.string() + ": malformed PVI record: " + e.what());
    }
  }
  return out;
}

void write_records(const std::filesystem::path& path, const std::vector<PviRecord>& records) {
  std::vector<json> rows;
  rows.reserve(records.size());
  for (const auto& r : records) rows.push_back(to_json(r));
  write_file_atomic(path, to_jsonl(rows));
}

std::string conditional_context(const synthesis::QaItem& item, bool include_options) {
  std::string ctx = item.question + "\n";
  if (include_options) {
    for (const auto& o : item.options) ctx += o.label + ". " + o.text + "\n";
  }
  ctx += "Answer:\n";
  return ctx;
}

PviRecord pvi_from_scores(std::string item_id, const gateway::ScoreResult& conditional,
                          const gateway::ScoreResult& unconditional, std::string scorer_model_id) {
  if (conditional.tokens.size() != unconditional.tokens.size()) {
    throw PviIntegrityError("item " + item_id + ": conditional and unconditional scoring returned " +
                            std::to_string(conditional.tokens.size()) + " vs " +
                            std::to_string(unconditional.tokens.size()) + " tokens");
  }
  PviRecord r;
  r.item_id = std::move(item_id);
  r.scorer_model_id = std::move(scorer_model_id);
  for (std::size_t i = 0; i < conditional.tokens.size(); ++i) {
    const auto& c = conditional.tokens[i];
    const auto& u = unconditional.tokens[i];
    if (c.text != u.text) {
      throw PviIntegrityError("item " + r.item_id + ": token " + std::to_string(i) + " differs ('" + c.text +
                              "' vs '" + u.text + "')");
    }
    r.token_deltas.push_back({c.text, (c.logprob_nat - u.logprob_nat) / std::numbers::ln2});
  }
  r.pvi_bits = 0.0;
  for (const auto& d : r.token_deltas) r.pvi_bits += d.delta_bits;
  return r;
}

PviRecord compute_pvi(const synthesis::QaItem& item, gateway::Gateway& gw, const std::string& scorer,
                      const PviOptions& options) {
  if (trim(item.explanation).empty()) throw Error("item " + item.id + " has no explanation to score");
  auto& backend = gw.backend(scorer);
  if (!backend.supports_scoring()) throw CapabilityError("backend '" + scorer + "' does not support scoring");
  auto cond = gw.score(scorer, conditional_context(item, options.include_options), item.explanation);
  auto uncond = gw.score(scorer, "", item.explanation);
  return pvi_from_scores(item.id, cond, uncond, backend.model());
}

void normalize(std::vector<PviRecord>& records) {
  if (records.empty()) return;
  auto [lo, hi] = std::minmax_element(records.begin(), records.end(),
                                      [](const auto& a, const auto& b) { return a.pvi_bits < b.pvi_bits; });
  const double min = lo->pvi_bits, max = hi->pvi_bits;
  for (auto& r : records) r.normalized_pvi = (records.size() < 2 || max == min) ? 0.5 : (r.pvi_bits - min) / (max - min);
}

// ---------------------------------------------------------------------------
// K-means

namespace {

double sse(const std::vector<double>& values, const std::vector<std::size_t>& assignment,
           const std::vector<double>& centroids) {
  double total = 0.0;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double d = values[i] - centroids[assignment[i]];
    total += d * d;
  }
  return total;
}

std::size_t nearest(double v, const std::vector<double>& centroids) {
  std::size_t best = 0;
  double best_d = std::abs(v - centroids[0]);
  for (std::size_t c = 1; c < centroids.size(); ++c) {
    const double d = std::abs(v - centroids[c]);
    if (d < best_d) {
      best = c;
      best_d = d;
    }
  }
  return best;
}

// Relabels clusters so centroids ascend; ties stay in index order.
void canonicalize(KMeansResult& r) {
  std::vector<std::size_t> order(r.centroids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return r.centroids[a] < r.centroids[b]; });
  std::vector<std::size_t> rank(order.size());
  std::vector<double> centroids(order.size());
  for (std::size_t i = 0; i < order.size(); ++i) {
    rank[order[i]] = i;
    centroids[i] = r.centroids[order[i]];
  }
  for (auto& a : r.assignment) a = rank[a];
  r.centroids = std::move(centroids);
}

std::vector<double> quantile_seeds(std::vector<double> sorted, std::size_t k) {
  std::sort(sorted.begin(), sorted.end());
  std::vector<double> seeds;
  const double n = static_cast<double>(sorted.size());
  for (std::size_t j = 0; j < k; ++j) {
    auto idx = static_cast<std::size_t>((static_cast<double>(j) + 0.5) * n / static_cast<double>(k));
    seeds.push_back(sorted[std::min(idx, sorted.size() - 1)]);
  }
  return seeds;
}

std::vector<double> plus_plus_seeds(const std::vector<double>& values, std::size_t k, SeededRng& rng) {
  std::vector<double> seeds{values[rng.below(values.size())]};
  std::vector<double> d2(values.size());
  while (seeds.size() < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < values.size(); ++i) {
      const double d = values[i] - seeds[nearest(values[i], seeds)];
      d2[i] = d * d;
      total += d2[i];
    }
    if (total <= 0.0) {
      seeds.push_back(values[rng.below(values.size())]);
      continue;
    }
    double target = rng.unit() * total;
    std::size_t pick = values.size() - 1;
    for (std::size_t i = 0; i < values.size(); ++i) {
      target -= d2[i];
      if (target < 0.0) {
        pick = i;
        break;
      }
    }
    seeds.push_back(values[pick]);
  }
  return seeds;
}

// Optimal partition of sorted values into k contiguous groups, by dynamic
// programming over prefix sums. Returns the group means.
std::vector<double> exact_centroids(const std::vector<double>& values, std::size_t k) {
  std::vector<double> s(values);
  std::sort(s.begin(), s.end());
  const std::size_t n = s.size();
  std::vector<double> p1(n + 1, 0.0), p2(n + 1, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    p1[i + 1] = p1[i] + s[i];
    p2[i + 1] = p2[i] + s[i] * s[i];
  }
  auto cost = [&](std::size_t a, std::size_t b) {  // values [a, b)
    const double m = static_cast<double>(b - a);
    const double sum = p1[b] - p1[a];
    return std::max(0.0, (p2[b] - p2[a]) - sum * sum / m);
  };
  constexpr double kInf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> dp(k + 1, std::vector<double>(n + 1, kInf));
  std::vector<std::vector<std::size_t>> cut(k + 1, std::vector<std::size_t>(n + 1, 0));
  dp[0][0] = 0.0;
  for (std::size_t j = 1; j <= k; ++j) {
    for (std::size_t i = j; i <= n; ++i) {
      for (std::size_t m = j - 1; m < i; ++m) {
        if (dp[j - 1][m] == kInf) continue;
        const double c = dp[j - 1][m] + cost(m, i);
        if (c < dp[j][i]) {
          dp[j][i] = c;
          cut[j][i] = m;
        }
      }
    }
  }
  std::vector<double> centroids(k);
  std::size_t end = n;
  for (std::size_t j = k; j >= 1; --j) {
    const std::size_t begin = cut[j][end];
    centroids[j - 1] = (p1[end] - p1[begin]) / static_cast<double>(end - begin);
    end = begin;
  }
  return centroids;
}

}  // namespace

KMeansResult lloyd_1d(const std::vector<double>& values, std::vector<double> centroids) {
  KMeansResult r;
  r.assignment.assign(values.size(), 0);
  for (int iter = 0; iter < kMaxIterations; ++iter) {
    for (std::size_t i = 0; i < values.size(); ++i) r.assignment[i] = nearest(values[i], centroids);
    std::vector<double> sum(centroids.size(), 0.0);
    std::vector<std::size_t> count(centroids.size(), 0);
    for (std::size_t i = 0; i < values.size(); ++i) {
      sum[r.assignment[i]] += values[i];
      ++count[r.assignment[i]];
    }
    double shift = 0.0;
    for (std::size_t c = 0; c < centroids.size(); ++c) {
      if (count[c] == 0) continue;  // an empty cluster keeps its centroid
      const double next = sum[c] / static_cast<double>(count[c]);
      shift = std::max(shift, std::abs(next - centroids[c]));
      centroids[c] = next;
    }
    if (shift <= kTolerance) break;
  }
  for (std::size_t i = 0; i < values.size(); ++i) r.assignment[i] = nearest(values[i], centroids);
  r.centroids = std::move(centroids);
  r.inertia = sse(values, r.assignment, r.centroids);
  canonicalize(r);
  return r;
}

KMeansResult kmeans_1d(const std::vector<double>& values, std::size_t k, std::uint64_t seed, int restarts) {
  if (k == 0) throw Error("k must be >= 1");
  if (values.size() < k) {
    throw Error("k-means needs at least k=" + std::to_string(k) + " values, got " + std::to_string(values.size()));
  }
  KMeansResult best = lloyd_1d(values, quantile_seeds(values, k));
  auto consider = [&](KMeansResult cand) {
    if (cand.inertia < best.inertia) best = std::move(cand);
  };
  SeededRng rng(seed);
  for (int r = 0; r < restarts; ++r) consider(lloyd_1d(values, plus_plus_seeds(values, k, rng)));
  if (values.size() <= kExactLimit) consider(lloyd_1d(values, exact_centroids(values, k)));
  return best;
}

void cluster_difficulty(std::vector<PviRecord>& records, std::size_t k, std::uint64_t seed) {
  std::vector<double> values;
  values.reserve(records.size());
  for (const auto& r : records) values.push_back(r.normalized_pvi);
  auto result = kmeans_1d(values, k, seed);
  // Centroids ascend after canonicalization, so the last cluster holds the
  // highest PVI (easiest items).
  for (std::size_t i = 0; i < records.size(); ++i) {
    const std::size_t c = result.assignment[i];
    if (k == 1) {
      records[i].difficulty = "medium";
    } else if (c == k - 1) {
      records[i].difficulty = "easy";
    } else if (c == 0) {
      records[i].difficulty = "hard";
    } else {
      records[i].difficulty = "medium";
    }
  }
}

std::vector<std::pair<std::size_t, double>> elbow_diagnostic(const std::vector<PviRecord>& records,
                                                             std::size_t k_min, std::size_t k_max,
                                                             std::uint64_t seed) {
  if (k_min < 1 || k_min > k_max) throw Error("invalid k range");
  if (k_max > records.size()) throw Error("k range exceeds record count");
  std::vector<double> values;
  for (const auto& r : records) values.push_back(r.normalized_pvi);
  std::vector<std::pair<std::size_t, double>> out;
  for (std::size_t k = k_min; k <= k_max; ++k) out.emplace_back(k, kmeans_1d(values, k, seed).inertia);
  return out;
}

}  // namespace hopqa::pvi
