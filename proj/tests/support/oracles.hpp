#pragma once

// Reference implementations written independently of the library, used as
// test oracles. Kept deliberately naive.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "altboot/corpus.hpp"

namespace oracle {

inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 14695981039346656037ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// Lowercase, split on anything that is not [a-z0-9] or a high byte.
inline std::vector<std::string> words(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  for (unsigned char c : text) {
    bool word = std::isalnum(c) || c >= 0x80;
    if (word) {
      cur.push_back(static_cast<char>(c >= 0x80 ? c : std::tolower(c)));
    } else if (!cur.empty()) {
      out.push_back(cur);
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(cur);
  return out;
}

/// Score every document from scratch with the closed-form BM25 formula.
inline std::vector<double> bm25_all(const std::vector<std::vector<std::string>>& docs,
                                    const std::vector<std::string>& query, double k1 = 1.2,
                                    double b = 0.75) {
  const double n = static_cast<double>(docs.size());
  double total = 0;
  for (const auto& d : docs) total += static_cast<double>(d.size());
  const double avgdl = total / n;
  std::vector<std::string> uniq;
  for (const auto& t : query) {
    if (std::find(uniq.begin(), uniq.end(), t) == uniq.end()) uniq.push_back(t);
  }
  std::vector<double> scores(docs.size(), 0.0);
  for (const auto& t : uniq) {
    double df = 0;
    for (const auto& d : docs) df += std::count(d.begin(), d.end(), t) > 0 ? 1 : 0;
    if (df == 0) continue;
    const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
    for (std::size_t i = 0; i < docs.size(); ++i) {
      const double tf = static_cast<double>(std::count(docs[i].begin(), docs[i].end(), t));
      if (tf == 0) continue;
      const double len = static_cast<double>(docs[i].size());
      scores[i] += idf * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avgdl));
    }
  }
  return scores;
}

/// Indices sorted by score desc, index asc; optionally dropping non-positive scores.
inline std::vector<std::size_t> argsort_desc(const std::vector<double>& scores, std::size_t k,
                                             bool positive_only) {
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    if (!positive_only || scores[i] > 0) idx.push_back(i);
  }
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) {
    if (scores[a] != scores[c]) return scores[a] > scores[c];
    return a < c;
  });
  if (idx.size() > k) idx.resize(k);
  return idx;
}

inline double ndcg(const std::vector<std::string>& ranked, const std::map<std::string, int>& judged,
                   std::size_t k) {
  double dcg = 0;
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) {
    auto it = judged.find(ranked[i]);
    int rel = it == judged.end() ? 0 : it->second;
    dcg += (std::pow(2.0, rel) - 1) / std::log2(static_cast<double>(i) + 2);
  }
  std::vector<int> grades;
  for (const auto& [id, g] : judged) grades.push_back(g);
  std::sort(grades.rbegin(), grades.rend());
  double idcg = 0;
  for (std::size_t i = 0; i < grades.size() && i < k; ++i) {
    idcg += (std::pow(2.0, grades[i]) - 1) / std::log2(static_cast<double>(i) + 2);
  }
  return idcg > 0 ? dcg / idcg : 0.0;
}

inline double recall(const std::vector<std::string>& ranked, const std::map<std::string, int>& judged,
                     std::size_t k) {
  std::set<std::string> rel, top;
  for (const auto& [id, g] : judged) {
    if (g > 0) rel.insert(id);
  }
  for (std::size_t i = 0; i < ranked.size() && i < k; ++i) top.insert(ranked[i]);
  if (rel.empty()) return 0.0;
  std::vector<std::string> both;
  std::set_intersection(rel.begin(), rel.end(), top.begin(), top.end(), std::back_inserter(both));
  return static_cast<double>(both.size()) / static_cast<double>(rel.size());
}

/// Ranks chosen by the extraction rule, enumerated literally from its text.
struct RuleRanks {
  std::vector<std::size_t> pos, neg;
};
inline RuleRanks extraction(std::size_t n, std::size_t k, std::size_t k_pos, std::size_t k_neg) {
  RuleRanks r;
  for (std::size_t rank = 1; rank <= n; ++rank) {
    if (rank <= k_pos) r.pos.push_back(rank);
  }
  if (n >= k) {
    for (std::size_t rank = k - k_neg + 1; rank <= k; ++rank) r.neg.push_back(rank);
  } else {
    std::size_t avail = n - r.pos.size();
    std::size_t take = std::min(k_neg, avail);
    for (std::size_t rank = n - take + 1; rank <= n; ++rank) r.neg.push_back(rank);
  }
  return r;
}

/// Central-difference check of an analytic gradient. `params` are perturbed in
/// place and restored. Returns the worst relative error, with the usual
/// |a - n| / max(|a| + |n|, floor) normalisation.
inline double gradient_error(std::vector<double*> params, const std::vector<double>& analytic,
                             const std::function<double()>& loss, double h = 1e-4,
                             double floor = 1e-6) {
  double worst = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double saved = *params[i];
    *params[i] = saved + h;
    const double up = loss();
    *params[i] = saved - h;
    const double down = loss();
    *params[i] = saved;
    const double numeric = (up - down) / (2 * h);
    const double err = std::abs(analytic[i] - numeric) /
                       std::max(std::abs(analytic[i]) + std::abs(numeric), floor);
    worst = std::max(worst, err);
  }
  return worst;
}

/// Seeded random corpus over a small vocabulary, so term overlap is common.
inline altboot::Corpus random_corpus(std::size_t n, std::uint64_t seed, std::size_t vocab = 300,
                                     std::size_t min_len = 5, std::size_t max_len = 40) {
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> len(min_len, max_len);
  // Zipf-ish word choice.
  std::vector<double> w(vocab);
  for (std::size_t i = 0; i < vocab; ++i) w[i] = 1.0 / static_cast<double>(i + 1);
  std::discrete_distribution<std::size_t> word(w.begin(), w.end());
  std::vector<altboot::Passage> ps;
  for (std::size_t i = 0; i < n; ++i) {
    std::string text;
    std::size_t l = len(rng);
    for (std::size_t j = 0; j < l; ++j) {
      if (j) text += ' ';
      text += "w" + std::to_string(word(rng));
    }
    ps.push_back({"p" + std::to_string(i), (i % 3 == 0) ? "t" + std::to_string(word(rng)) : "", text});
  }
  return altboot::Corpus(std::move(ps));
}

inline std::string random_text(std::mt19937_64& rng, std::size_t len, std::size_t vocab = 300) {
  std::uniform_int_distribution<std::size_t> word(0, vocab - 1);
  std::string text;
  for (std::size_t j = 0; j < len; ++j) {
    if (j) text += ' ';
    text += "w" + std::to_string(word(rng));
  }
  return text;
}

}  // namespace oracle
