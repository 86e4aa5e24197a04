#include "altboot/ranking.hpp"

#include <algorithm>
#include <unordered_set>

#include "altboot/corpus.hpp"
#include "altboot/error.hpp"

namespace altboot {

std::vector<Hit> top_k(std::span<const double> scores, std::size_t k) {
  std::vector<Hit> hits(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) hits[i] = Hit{i, scores[i]};
  k = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(),
                    hit_before);
  hits.resize(k);
  return hits;
}

RankedList to_ranked_list(std::string query_id, std::span<const Hit> hits, const Corpus& corpus) {
  RankedList list{std::move(query_id), {}};
  list.entries.reserve(hits.size());
  for (std::size_t i = 0; i < hits.size(); ++i) {
    list.entries.push_back(RankedEntry{corpus[hits[i].ordinal].id, hits[i].score, i + 1});
  }
  return list;
}

std::vector<Hit> to_hits(const RankedList& list, const Corpus& corpus) {
  std::vector<Hit> hits;
  hits.reserve(list.size());
  for (const auto& e : list.entries) hits.push_back(Hit{corpus.ordinal(e.passage_id), e.score});
  return hits;
}

void validate_ranked_list(const RankedList& list) {
  std::unordered_set<std::string> seen;
  for (std::size_t i = 0; i < list.entries.size(); ++i) {
    const auto& e = list.entries[i];
    if (e.rank != i + 1) throw DataError("ranked list " + list.query_id + ": ranks not contiguous");
    if (i > 0 && e.score > list.entries[i - 1].score) {
      throw DataError("ranked list " + list.query_id + ": scores increase at rank " +
                      std::to_string(e.rank));
    }
    if (!seen.insert(e.passage_id).second) {
      throw DataError("ranked list " + list.query_id + ": duplicate passage " + e.passage_id);
    }
  }
}

}  // namespace altboot
