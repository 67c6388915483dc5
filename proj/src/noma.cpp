#include <cmath>

#include "hopqa/error.hpp"
#include "hopqa/eval.hpp"

namespace hopqa::eval {

NomaRates noma_rates(const NomaScenario& s) {
  if (!(s.g2 >= 0.0) || !(s.g1 >= s.g2)) throw Error("NOMA scenario requires g1 >= g2 >= 0");
  if (!(s.bandwidth > 0.0)) throw Error("NOMA scenario requires B > 0");
  if (!(s.r_min >= 0.0)) throw Error("NOMA scenario requires r_min >= 0");
  return {s.bandwidth * std::log2(1.0 + s.g1 / (s.g2 + 1.0)), s.bandwidth * std::log2(1.0 + s.g2)};
}

std::optional<NomaOptimum> noma_optimize(double total_gain, double r_min, std::size_t grid, double bandwidth) {
  if (grid < 2) throw Error("grid must have at least 2 points");
  if (!(total_gain >= 0.0)) throw Error("total gain must be >= 0");
  constexpr double kTie = 1e-12;
  std::optional<NomaOptimum> best;
  for (std::size_t i = 0; i < grid; ++i) {
    const double beta = 0.5 + 0.5 * static_cast<double>(i) / static_cast<double>(grid - 1);
    NomaScenario s{bandwidth, beta * total_gain, (1.0 - beta) * total_gain, r_min};
    const auto rates = noma_rates(s);
    if (rates.r2 < r_min) continue;
    const double sum = rates.r1 + rates.r2;
    if (!best || sum > best->sum_rate + kTie) best = NomaOptimum{beta, sum, rates};
  }
  return best;
}

}  // namespace hopqa::eval
