#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "hopqa/error.hpp"
#include "hopqa/synthesis.hpp"
#include "hopqa/util.hpp"

namespace hopqa::gateway {
class Gateway;
struct ScoreResult;
}  // namespace hopqa::gateway

namespace hopqa::pvi {

class PviIntegrityError : public IntegrityError {
 public:
  using IntegrityError::IntegrityError;
};

struct TokenDelta {
  std::string text;
  double delta_bits = 0.0;
  friend bool operator==(const TokenDelta&, const TokenDelta&) = default;
};

struct PviRecord {
  std::string item_id;
  std::vector<TokenDelta> token_deltas;
  double pvi_bits = 0.0;
  double normalized_pvi = 0.5;
  std::string scorer_model_id;
  std::string difficulty = "unset";
  friend bool operator==(const PviRecord&, const PviRecord&) = default;
};

json to_json(const PviRecord& r);
PviRecord record_from_json(const json& j);
std::vector<PviRecord> read_records(const std::filesystem::path& path);
void write_records(const std::filesystem::path& path, const std::vector<PviRecord>& records);

// Question text, then the options when requested, then the answer stem
// "Answer:" and a newline.
std::string conditional_context(const synthesis::QaItem& item, bool include_options);

// Combines a conditional and an unconditional scoring of the same target.
// Throws PviIntegrityError when the two tokenizations differ.
PviRecord pvi_from_scores(std::string item_id, const gateway::ScoreResult& conditional,
                          const gateway::ScoreResult& unconditional, std::string scorer_model_id);

struct PviOptions {
  bool include_options = true;
};

PviRecord compute_pvi(const synthesis::QaItem& item, gateway::Gateway& gw, const std::string& scorer,
                      const PviOptions& options = {});

// Min-max normalization over the batch. Fewer than two records or a
// constant batch map to 0.5.
void normalize(std::vector<PviRecord>& records);

struct KMeansResult {
  std::vector<std::size_t> assignment;  // cluster index per value
  std::vector<double> centroids;
  double inertia = 0.0;  // within-cluster sum of squared errors
};

inline constexpr int kMaxIterations = 300;
inline constexpr double kTolerance = 1e-9;

// One Lloyd run from the given centroids.
KMeansResult lloyd_1d(const std::vector<double>& values, std::vector<double> centroids);

// Best of: quantile-seeded Lloyd, `restarts` seeded k-means++ runs, and (for
// n <= kExactLimit) the exact contiguous-partition optimum refined by Lloyd.
// Ties keep the earlier candidate.
inline constexpr std::size_t kExactLimit = 4096;
KMeansResult kmeans_1d(const std::vector<double>& values, std::size_t k, std::uint64_t seed, int restarts = 10);

// Clusters normalized_pvi and labels clusters by descending centroid:
// easy, medium..., hard. k = 1 labels everything medium.
void cluster_difficulty(std::vector<PviRecord>& records, std::size_t k, std::uint64_t seed);

std::vector<std::pair<std::size_t, double>> elbow_diagnostic(const std::vector<PviRecord>& records,
                                                             std::size_t k_min, std::size_t k_max,
                                                             std::uint64_t seed);

}  // namespace hopqa::pvi
