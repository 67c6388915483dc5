#include <cctype>
#include <map>

#include "hopqa/eval.hpp"

namespace hopqa::eval {

std::vector<std::string> rouge_tokens(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  auto flush = [&] {
    if (!cur.empty()) out.push_back(std::move(cur));
    cur.clear();
  };
  for (unsigned char c : text) {
    if (std::isspace(c)) {
      flush();
    } else if (std::ispunct(c)) {
      flush();
      out.emplace_back(1, static_cast<char>(c));
    } else {
      cur.push_back(static_cast<char>(std::tolower(c)));
    }
  }
  flush();
  return out;
}

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

namespace {

std::map<std::vector<std::string>, std::size_t> ngrams(const std::vector<std::string>& toks, std::size_t n) {
  std::map<std::vector<std::string>, std::size_t> out;
  for (std::size_t i = 0; i + n <= toks.size(); ++i) ++out[{toks.begin() + i, toks.begin() + i + n}];
  return out;
}

RougeScore make_score(double overlap, double cand_total, double ref_total) {
  RougeScore s;
  s.precision = cand_total > 0 ? overlap / cand_total : 0.0;
  s.recall = ref_total > 0 ? overlap / ref_total : 0.0;
  s.f1 = s.precision + s.recall > 0 ? 2 * s.precision * s.recall / (s.precision + s.recall) : 0.0;
  return s;
}

}  // namespace

RougeScore rouge(std::string_view candidate, std::string_view reference, RougeVariant variant) {
  const auto cand = rouge_tokens(candidate);
  const auto ref = rouge_tokens(reference);
  if (variant == RougeVariant::rougeL) {
    return make_score(static_cast<double>(lcs_length(cand, ref)), static_cast<double>(cand.size()),
                      static_cast<double>(ref.size()));
  }
  const std::size_t n = variant == RougeVariant::rouge1 ? 1 : 2;
  const auto c = ngrams(cand, n);
  const auto r = ngrams(ref, n);
  std::size_t overlap = 0, c_total = 0, r_total = 0;
  for (const auto& [g, count] : c) {
    c_total += count;
    auto it = r.find(g);
    if (it != r.end()) overlap += std::min(count, it->second);
  }
  for (const auto& [g, count] : r) r_total += count;
  return make_score(static_cast<double>(overlap), static_cast<double>(c_total), static_cast<double>(r_total));
}

}  // namespace hopqa::eval
