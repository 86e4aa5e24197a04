#pragma once

#include <cstddef>
#include <map>
#include <span>
#include <string>
#include <vector>

namespace altboot {

class Corpus;

/// A scored corpus position. The internal currency of every retriever.
struct Hit {
  std::size_t ordinal = 0;
  double score = 0.0;

  bool operator==(const Hit&) const = default;
};

/// Orders by descending score, ties by ascending ordinal.
inline bool hit_before(const Hit& a, const Hit& b) {
  if (a.score != b.score) return a.score > b.score;
  return a.ordinal < b.ordinal;
}

/// Exact top-k of a dense score vector under hit_before.
std::vector<Hit> top_k(std::span<const double> scores, std::size_t k);

struct RankedEntry {
  std::string passage_id;
  double score = 0.0;
  std::size_t rank = 0;  // 1-based

  bool operator==(const RankedEntry&) const = default;
};

/// An ordered retrieval or reranking result for one query.
struct RankedList {
  std::string query_id;
  std::vector<RankedEntry> entries;

  std::size_t size() const { return entries.size(); }
  bool empty() const { return entries.empty(); }
  bool operator==(const RankedList&) const = default;
};

/// query id -> ranked list.
using Run = std::map<std::string, RankedList>;

RankedList to_ranked_list(std::string query_id, std::span<const Hit> hits, const Corpus& corpus);
std::vector<Hit> to_hits(const RankedList& list, const Corpus& corpus);

/// Throws DataError unless ranks are 1..n, scores non-increasing and ids unique.
void validate_ranked_list(const RankedList& list);

}  // namespace altboot
