#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "altboot/corpus.hpp"
#include "altboot/dense.hpp"
#include "altboot/optim.hpp"
#include "altboot/ranking.hpp"
#include "altboot/text.hpp"

namespace altboot {

/// Joint query-passage scorer. The pair is described by
///   f(q, p) = [mean E(q) ; mean E(p) ; mean E(q) * mean E(p) ; jaccard ; coverage]
/// over one shared embedding table, and scored by a single tanh hidden layer:
///   score = w2 . tanh(W1 f + b1) + b2
/// jaccard = |Q & P| / |Q | P| and coverage = |Q & P| / |Q| over token sets.
template <class T>
struct BasicRerankModel {
  std::uint32_t buckets = 0;
  std::uint32_t dim = 0;
  std::uint32_t hidden = 0;
  std::uint64_t seed = 0;
  std::vector<T> embed;  // buckets x dim
  std::vector<T> w1;     // hidden x features()
  std::vector<T> b1;     // hidden
  std::vector<T> w2;     // hidden
  T b2 = 0;

  std::size_t features() const { return 3 * static_cast<std::size_t>(dim) + 2; }

  /// Embeddings ~ N(0, embed_sigma^2), W1 ~ N(0, 1/features), w2 ~ N(0, 1/hidden),
  /// biases zero. Same seed, same parameters.
  static BasicRerankModel initialize(std::uint32_t buckets, std::uint32_t dim, std::uint32_t hidden,
                                     std::uint64_t seed, double embed_sigma = 0.1);
  static BasicRerankModel zeros(std::uint32_t buckets, std::uint32_t dim, std::uint32_t hidden);

  std::uint64_t checksum() const;
  void validate() const;

  template <class U>
  BasicRerankModel<U> cast() const {
    BasicRerankModel<U> out;
    out.buckets = buckets;
    out.dim = dim;
    out.hidden = hidden;
    out.seed = seed;
    out.embed.assign(embed.begin(), embed.end());
    out.w1.assign(w1.begin(), w1.end());
    out.b1.assign(b1.begin(), b1.end());
    out.w2.assign(w2.begin(), w2.end());
    out.b2 = static_cast<U>(b2);
    return out;
  }

  bool operator==(const BasicRerankModel&) const = default;
};

using RerankModel = BasicRerankModel<float>;

/// The interaction feature vector f(q, p) described above.
template <class T>
std::vector<double> pair_features(const BasicRerankModel<T>& model, const TokenSeq& query,
                                  const TokenSeq& passage);

template <class T>
double rerank_score(const BasicRerankModel<T>& model, const TokenSeq& query, const TokenSeq& passage);
double rerank_score(const RerankModel& model, std::string_view query, std::string_view passage);

/// Reorders the first min(depth, size) entries by reranker score (stable, so
/// the incoming rank breaks ties). The reordered block carries reranker
/// scores; entries past depth keep their order and original scores.
RankedList rerank(const RerankModel& model, std::string_view query, const RankedList& candidates,
                  std::size_t depth, const Corpus& corpus, bool include_title = true);

struct RerankGrad {
  RowGrad embed;
  std::vector<double> w1;
  std::vector<double> b1;
  std::vector<double> w2;
  double b2 = 0.0;
};

struct RerankLoss {
  double loss = 0.0;
  RerankGrad grad;
};

enum class KlDirection {
  StudentTeacher,  // KL(S || T), the default
  TeacherStudent,  // KL(T || S)
};

std::string to_string(KlDirection direction);
KlDirection kl_direction_from_string(const std::string& name);

/// Retriever-produced target distribution over sampled candidates.
struct SoftLabelSet {
  std::string query_id;
  std::vector<std::string> passage_ids;
  std::vector<double> teacher_probs;

  /// Throws DataError unless |ids| = |probs| >= 2 and probs sum to 1 +- 1e-9.
  void validate() const;
  bool operator==(const SoftLabelSet&) const = default;
};

/// S = softmax of reranker scores over the candidates; loss = KL(S || T) (or
/// KL(T || S)). Throws DataError if any teacher probability is zero.
template <class T>
RerankLoss kl_loss(const BasicRerankModel<T>& model, const TokenSeq& query,
                   std::span<const TokenSeq> passages, std::span<const double> teacher,
                   KlDirection direction = KlDirection::StudentTeacher);

RerankLoss kl_loss(const RerankModel& model, std::string_view query, const SoftLabelSet& labels,
                   const Corpus& corpus, const NoiseConfig* noise = nullptr,
                   KlDirection direction = KlDirection::StudentTeacher, bool include_title = true);

/// -log softmax(positive | {positive} + negatives). Needs >= 1 negative.
template <class T>
RerankLoss ce_loss(const BasicRerankModel<T>& model, const TokenSeq& query, const TokenSeq& positive,
                   std::span<const TokenSeq> negatives);

// ---- Training --------------------------------------------------------------

enum class RerankObjective { Kl, Ce };

struct RerankTrainConfig {
  std::uint32_t buckets = 65536;
  std::uint32_t dim = 64;
  std::uint32_t hidden = 32;
  double embed_sigma = 0.1;
  std::uint64_t init_seed = 0;  // fresh-initialisation seed

  std::size_t epochs = 3;
  std::size_t batch_size = 16;  // queries per step
  std::size_t negatives = 7;
  std::size_t pool_first_rank = 11;  // negative pool: ranks [first, last]
  std::size_t pool_last_rank = 100;
  double learning_rate = 1e-3;
  double teacher_temperature = 1.0;
  RerankObjective objective = RerankObjective::Kl;
  KlDirection kl_direction = KlDirection::StudentTeacher;
  NoiseConfig noise{};
  bool noise_queries = true;
  bool noise_passages = true;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;  // sampling and noise
  bool include_title = true;

  void validate() const;
  OptimizerConfig optimizer_config() const;
  RerankModel fresh_model() const;
};

/// A query's retriever top-k list plus the ordinals extracted as positives.
struct CandidatePool {
  std::size_t query = 0;          // index into the QuerySet
  std::vector<Hit> hits;          // retriever order, retriever scores
  std::vector<std::size_t> positives;
};

/// Retrieves top `depth` for every query with the retriever and marks the
/// first `positives` ranks as positives.
std::vector<CandidatePool> build_candidate_pools(const DenseModel& retriever,
                                                 const PassageMatrix& matrix,
                                                 const QuerySet& queries, std::size_t depth,
                                                 std::size_t positives, std::size_t threads = 1);

/// Draws one candidate subset: one extracted positive plus up to
/// cfg.negatives passages from ranks [pool_first_rank, pool_last_rank]
/// that are not positives. Teacher probabilities are the softmax of the
/// retriever scores at cfg.teacher_temperature. Empty when no subset of
/// size >= 2 exists.
std::optional<SoftLabelSet> sample_soft_labels(const CandidatePool& pool, const QuerySet& queries,
                                               const Corpus& corpus, const RerankTrainConfig& cfg,
                                               std::uint64_t seed);

struct RerankTrainStats {
  std::size_t steps = 0;
  std::size_t skipped_queries = 0;
  std::vector<double> epoch_loss;
};

/// Trains from `start`. Pools that yield no subset are skipped and counted.
RerankModel train_reranker_from(RerankModel start, std::span<const CandidatePool> pools,
                                const QuerySet& queries, const Corpus& corpus,
                                const RerankTrainConfig& cfg, RerankTrainStats* stats = nullptr);

/// Trains a freshly initialised reranker (cfg.fresh_model()).
RerankModel train_reranker(std::span<const CandidatePool> pools, const QuerySet& queries,
                           const Corpus& corpus, const RerankTrainConfig& cfg,
                           RerankTrainStats* stats = nullptr);

/// Convenience: pools from the retriever's top pool_last_rank list with the
/// first `positives` ranks as positives, then train_reranker.
RerankModel train_reranker(const DenseModel& retriever, const QuerySet& queries,
                           const Corpus& corpus, const RerankTrainConfig& cfg,
                           std::size_t positives = 10, std::size_t threads = 1,
                           RerankTrainStats* stats = nullptr);

// ---- Checkpoints -----------------------------------------------------------

void write_checkpoint(const RerankModel& model, std::ostream& out);
RerankModel read_rerank_checkpoint(std::istream& in);
void save_checkpoint(const RerankModel& model, const std::filesystem::path& path);
RerankModel load_rerank_checkpoint(const std::filesystem::path& path);

}  // namespace altboot
