#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "altboot/bm25.hpp"
#include "altboot/corpus.hpp"
#include "altboot/dense.hpp"
#include "altboot/ranking.hpp"
#include "altboot/rerank.hpp"

namespace altboot {

/// Label extraction window over a ranked list: ranks 1..k_pos are
/// positives, ranks k-k_neg+1..k are hard negatives.
struct ExtractionRule {
  std::size_t k = 50;
  std::size_t k_pos = 10;
  std::size_t k_neg = 5;

  void validate() const;
};

/// Positives are the first min(k_pos, n) entries. With n >= k the negatives
/// are ranks k-k_neg+1..k; with n < k they are the last
/// min(k_neg, n - |positives|) entries. Positives and negatives never overlap.
TrainingExample extract_labels(const RankedList& ranked, const ExtractionRule& rule);

/// 1-based rank ranges chosen by the rule for a list of length n:
/// {pos_first, pos_last, neg_first, neg_last}; an empty range has first > last.
struct ExtractionRanks {
  std::size_t pos_first, pos_last, neg_first, neg_last;
};
ExtractionRanks extraction_ranks(std::size_t n, const ExtractionRule& rule);

/// Held-out queries and judgments used to score every iteration.
struct Validation {
  const QuerySet* queries = nullptr;
  const Qrels* qrels = nullptr;
  std::size_t k = 10;
};

struct BootstrapConfig {
  ExtractionRule rule{};
  TrainConfig retriever{};
  RerankTrainConfig reranker{};
  Bm25Params bm25{};
  std::uint32_t buckets = 65536;
  std::uint32_t dim = 64;
  double init_sigma = 0.02;
  std::size_t retrieve_k = 100;
  std::size_t rerank_depth = 100;
  /// Extract refined labels from the retriever's own ranking and skip the
  /// reranker entirely (ablation).
  bool self_supervision = false;
  /// Ablations of the re-initialisation discipline.
  bool warm_start_retriever = false;
  bool warm_start_reranker = false;
  std::uint64_t seed = 0;
  std::size_t threads = 1;
  bool include_title = true;
  /// When set, iteration artifacts are written here.
  std::filesystem::path artifacts_dir;

  void validate() const;
  /// Seeds every component config from the master seed. The loop calls
  /// this itself; exposed so callers can reproduce individual steps.
  TrainConfig retriever_config(std::size_t iteration) const;
  RerankTrainConfig reranker_config(std::size_t iteration) const;
  DenseModel fresh_retriever() const;
};

struct IterationRecord {
  std::size_t t = 0;
  std::optional<double> retriever_metric;  // validation nDCG of D^t
  std::optional<double> reranker_metric;   // validation nDCG of R^t over D^{t-1} lists
  std::uint64_t retriever_init_checksum = 0;
  std::uint64_t retriever_checksum = 0;
  std::optional<std::uint64_t> reranker_init_checksum;
  std::optional<std::uint64_t> reranker_checksum;
  std::size_t examples = 0;
  std::size_t skipped_examples = 0;
};

struct BootstrapState {
  std::size_t t = 0;
  DenseModel warmup;
  DenseModel retriever;
  std::optional<RerankModel> reranker;
  std::vector<IterationRecord> trace;
  std::vector<DenseModel> retrievers;                // index = iteration
  std::vector<std::optional<RerankModel>> rerankers;  // index = iteration, empty at 0
};

/// Step 1: BM25 top-k, label extraction, warm-up retriever from a fresh init.
BootstrapState warmup(const Corpus& corpus, const QuerySet& queries, const BootstrapConfig& cfg,
                      const Validation* validation = nullptr);

/// Steps 2 and 3 for t = state.t + 1 .. T. Every reranker starts from the
/// seeded fresh init and every retriever from the warm-up model unless the
/// warm-start ablations are enabled.
BootstrapState iterate(BootstrapState state, std::size_t T, const Corpus& corpus,
                       const QuerySet& queries, const BootstrapConfig& cfg,
                       const Validation* validation = nullptr);

struct FinalSelection {
  std::size_t retriever_iteration = 0;
  std::size_t reranker_iteration = 0;
  DenseModel retriever;
  RerankModel reranker;
};

/// Best validation metric per role; ties go to the earlier iteration.
/// Throws RuntimeFailure when no metrics were recorded or t < 1.
FinalSelection select_final(const BootstrapState& state);

/// Argmax with earlier-wins ties over a metric trace; nullopt entries are skipped.
std::optional<std::size_t> best_iteration(std::span<const std::optional<double>> metrics);

std::string trace_json(const BootstrapState& state);
void write_trace(const BootstrapState& state, const std::filesystem::path& path);

/// Rebuilds a state from an artifacts directory written by warmup/iterate.
/// Throws DataError when files are missing or disagree with the trace.
BootstrapState load_state(const std::filesystem::path& artifacts_dir);

void write_labels(std::span<const TrainingExample> examples, const std::filesystem::path& path);
std::vector<TrainingExample> read_labels(const std::filesystem::path& path);

/// Validation nDCG of a retriever (exact search) and of a reranker applied
/// to a retriever's lists.
double evaluate_retriever(const DenseModel& model, const PassageMatrix& matrix, const Corpus& corpus,
                          const Validation& validation, std::size_t threads = 1);
double evaluate_reranker(const RerankModel& reranker, const DenseModel& retriever,
                         const PassageMatrix& matrix, const Corpus& corpus,
                         const Validation& validation, std::size_t retrieve_k,
                         std::size_t rerank_depth, std::size_t threads = 1,
                         bool include_title = true);

/// Full top-k run of a retriever over a query set.
Run dense_run(const DenseModel& model, const PassageMatrix& matrix, const Corpus& corpus,
              const QuerySet& queries, std::size_t k, std::size_t threads = 1);

}  // namespace altboot
