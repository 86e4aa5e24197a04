#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "altboot/corpus.hpp"
#include "altboot/dense.hpp"
#include "altboot/ranking.hpp"

namespace altboot {

/// Per-query values and their macro average. Queries of the run that have
/// no qrels entry are left out and counted in `excluded`.
struct Report {
  std::string metric;
  std::size_t k = 0;
  std::map<std::string, double> per_query;
  double mean = 0.0;
  std::size_t n = 0;
  std::size_t excluded = 0;

  /// {"metric", "k", "per_query", "mean", "n", "excluded"}
  std::string to_json() const;
};

/// trec_eval-style nDCG@k: gain 2^rel - 1, discount log2(rank + 1), unjudged
/// passages count as 0, and queries whose grades are all zero score 0.
Report ndcg_at_k(const Run& run, const Qrels& qrels, std::size_t k = 10);

/// |relevant in top-k| / |relevant|, relevant meaning grade > 0.
Report recall_at_k(const Run& run, const Qrels& qrels, std::size_t k);

/// 1 when any relevant passage is in the top k, else 0.
Report topk_accuracy(const Run& run, const Qrels& qrels, std::size_t k);

/// Scores with the sum of per-model dot products, which equals the dot
/// product of the concatenated embeddings. Exact top-k, ordinal tie-break.
/// Throws DataError when the matrices disagree on the corpus.
std::vector<Hit> ensemble_search(std::span<const DenseModel* const> models,
                                 std::span<const PassageMatrix* const> matrices,
                                 std::string_view query, std::size_t k);

/// TREC run lines "qid Q0 passage_id rank score tag", six decimals.
void write_run(const Run& run, std::ostream& out, const std::string& tag);
void write_run(const Run& run, const std::filesystem::path& path, const std::string& tag);
Run read_run(std::istream& in);
Run read_run(const std::filesystem::path& path);

}  // namespace altboot
