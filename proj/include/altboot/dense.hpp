#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "altboot/corpus.hpp"
#include "altboot/optim.hpp"
#include "altboot/ranking.hpp"
#include "altboot/text.hpp"

namespace altboot {

enum class Side { Query, Passage };

/// Asymmetric dual encoder: hashed bag-of-words with mean pooling, one
/// embedding table per side, relevance = dot(E_q(q), E_p(p)).
template <class T>
struct BasicDenseModel {
  std::uint32_t buckets = 0;
  std::uint32_t dim = 0;
  std::uint64_t seed = 0;
  std::vector<T> query_table;    // buckets x dim, row-major
  std::vector<T> passage_table;  // buckets x dim, row-major

  /// Both tables drawn from the same seeded N(0, sigma^2) stream, so the
  /// two towers start identical.
  static BasicDenseModel initialize(std::uint32_t buckets, std::uint32_t dim, std::uint64_t seed,
                                    double sigma = 0.02);

  std::vector<T>& table(Side side) { return side == Side::Query ? query_table : passage_table; }
  const std::vector<T>& table(Side side) const {
    return side == Side::Query ? query_table : passage_table;
  }

  /// FNV-1a over shape, seed and the raw table bytes.
  std::uint64_t checksum() const;
  /// Throws DataError on shape mismatch or non-finite values.
  void validate() const;

  template <class U>
  BasicDenseModel<U> cast() const {
    BasicDenseModel<U> out;
    out.buckets = buckets;
    out.dim = dim;
    out.seed = seed;
    out.query_table.assign(query_table.begin(), query_table.end());
    out.passage_table.assign(passage_table.begin(), passage_table.end());
    return out;
  }

  bool operator==(const BasicDenseModel&) const = default;
};

using DenseModel = BasicDenseModel<float>;

std::vector<std::uint32_t> bucket_ids(const TokenSeq& tokens, std::uint32_t buckets);

/// Mean of the side's table rows over the token buckets; zero vector when
/// there are no tokens.
template <class T>
std::vector<double> encode(const BasicDenseModel<T>& model, Side side, const TokenSeq& tokens);
template <class T>
std::vector<double> encode(const BasicDenseModel<T>& model, Side side, std::string_view text) {
  return encode(model, side, tokenize(text));
}

/// Dot-product relevance. Throws DataError on dimension mismatch.
double score(std::span<const double> query_vec, std::span<const double> passage_vec);

struct DenseGrad {
  RowGrad query;
  RowGrad passage;
};

struct LossResult {
  double loss = 0.0;
  DenseGrad grad;
};

struct ContrastiveTriple {
  TokenSeq query;
  TokenSeq positive;
  TokenSeq negative;
};

/// In-batch contrastive loss. For each query i the candidates are every
/// positive and hard negative in the batch:
///   loss_i = -s(q_i, p_i+)/tau + log sum_j sum_{p in {p_j+, p_j-}} exp(s(q_i, p)/tau)
/// Returns the batch mean and its exact gradient w.r.t. both tables.
template <class T>
LossResult contrastive_loss(const BasicDenseModel<T>& model,
                            std::span<const ContrastiveTriple> batch, double temperature);

/// Teacher distribution over candidate passages: softmax of raw dot
/// products at the given temperature.
std::vector<double> soft_labels(const DenseModel& model, std::string_view query,
                                std::span<const std::string> passages, double temperature = 1.0);

// ---- Passage matrix and exact search ---------------------------------------

/// Every passage encoded once, row i = ordinal i. Keyed by the model and
/// corpus checksums so a stale cache is detectable.
struct PassageMatrix {
  std::uint32_t dim = 0;
  std::uint64_t model_checksum = 0;
  std::uint64_t corpus_checksum = 0;
  std::vector<double> data;  // rows x dim

  std::size_t rows() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data).subspan(i * dim, dim);
  }
  bool operator==(const PassageMatrix&) const = default;
};

PassageMatrix encode_corpus(const DenseModel& model, const Corpus& corpus, std::size_t threads = 1,
                            bool include_title = true);
void save_passage_matrix(const PassageMatrix& matrix, const std::filesystem::path& path);
PassageMatrix load_passage_matrix(const std::filesystem::path& path);
/// Loads the cache when its key matches, otherwise encodes and rewrites it.
PassageMatrix cached_passage_matrix(const DenseModel& model, const Corpus& corpus,
                                    const std::filesystem::path& path, std::size_t threads = 1,
                                    bool include_title = true);

/// Exact top-k by dot product, ties by ordinal. Throws ConfigError for k < 1.
std::vector<Hit> dense_search(std::span<const double> query_vec, const PassageMatrix& matrix,
                              std::size_t k);
std::vector<Hit> dense_search(const DenseModel& model, const PassageMatrix& matrix,
                              std::string_view query, std::size_t k);

// ---- Training --------------------------------------------------------------

struct TrainConfig {
  std::size_t epochs = 3;
  std::size_t batch_size = 32;
  double learning_rate = 1e-3;
  double temperature = 1.0;
  NoiseConfig noise{};
  bool noise_queries = true;
  bool noise_passages = true;
  OptimizerKind optimizer = OptimizerKind::Adam;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;
  bool include_title = true;

  void validate() const;
  OptimizerConfig optimizer_config() const;
};

/// A query with positive and hard-negative passage ids.
struct TrainingExample {
  std::string query_id;
  std::vector<std::string> positives;
  std::vector<std::string> negatives;

  bool usable() const { return !positives.empty() && !negatives.empty(); }
  bool operator==(const TrainingExample&) const = default;
};

struct TrainStats {
  std::size_t steps = 0;
  std::size_t skipped_examples = 0;
  std::vector<double> epoch_loss;  // mean batch loss per epoch
};

/// Minibatch contrastive training. Per epoch every usable example
/// contributes one triple: a uniformly drawn positive and hard negative.
/// Examples lacking positives or negatives are skipped and counted.
DenseModel train_retriever(DenseModel model, std::span<const TrainingExample> examples,
                           const QuerySet& queries, const Corpus& corpus, const TrainConfig& cfg,
                           TrainStats* stats = nullptr);

struct FinetuneConfig {
  TrainConfig train{};
  double hard_negative_prob = 0.1;
  std::size_t mine_depth = 100;
  std::size_t threads = 1;
};

struct FinetuneResult {
  DenseModel stage1;
  DenseModel stage2;
  /// query id -> mined hard negatives (top mine_depth non-positives of stage 1).
  std::map<std::string, std::vector<std::string>> mined;
  std::size_t skipped_queries = 0;
};

/// Two-stage supervised recipe: stage 1 pairs each gold positive with a
/// random negative; stage 2 restarts from the same initial model and swaps
/// in a stage-1-mined hard negative with probability hard_negative_prob.
FinetuneResult finetune_supervised(const DenseModel& model, const Qrels& qrels,
                                   const QuerySet& queries, const Corpus& corpus,
                                   const FinetuneConfig& cfg);

// ---- Checkpoints -----------------------------------------------------------

void write_checkpoint(const DenseModel& model, std::ostream& out);
DenseModel read_checkpoint(std::istream& in);
void save_checkpoint(const DenseModel& model, const std::filesystem::path& path);
DenseModel load_dense_checkpoint(const std::filesystem::path& path);

}  // namespace altboot
