#include "altboot/dense.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <functional>
#include <numeric>
#include <random>
#include <set>

#include "altboot/binary_io.hpp"
#include "altboot/error.hpp"
#include "altboot/math.hpp"
#include "altboot/parallel.hpp"

namespace altboot {

namespace {

constexpr std::string_view kCheckpointMagic = "ABDM1";
constexpr std::string_view kMatrixMagic = "ABPM1";
constexpr std::uint32_t kVersion = 1;

template <class T>
std::uint64_t hash_bytes(const std::vector<T>& v, std::uint64_t h) {
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(T)), h);
}

template <class T>
std::uint64_t hash_value(T v, std::uint64_t h) {
  v = binio::to_little(v);
  return fnv1a64(std::string_view(reinterpret_cast<const char*>(&v), sizeof(T)), h);
}

// Adds scale * vec to the row of every bucket, once per occurrence.
void scatter_mean_grad(RowGrad& grad, const std::vector<std::uint32_t>& ids,
                       std::span<const double> vec) {
  if (ids.empty()) return;
  const double scale = 1.0 / static_cast<double>(ids.size());
  for (auto id : ids) {
    auto& row = grad[id];
    if (row.empty()) row.assign(vec.size(), 0.0);
    for (std::size_t d = 0; d < vec.size(); ++d) row[d] += scale * vec[d];
  }
}

template <class T>
std::vector<double> encode_ids(const BasicDenseModel<T>& model, Side side,
                               const std::vector<std::uint32_t>& ids) {
  std::vector<double> out(model.dim, 0.0);
  if (ids.empty()) return out;
  const auto& table = model.table(side);
  for (auto id : ids) {
    const T* row = table.data() + static_cast<std::size_t>(id) * model.dim;
    for (std::size_t d = 0; d < model.dim; ++d) out[d] += static_cast<double>(row[d]);
  }
  const double inv = 1.0 / static_cast<double>(ids.size());
  for (auto& x : out) x *= inv;
  return out;
}

struct TripleIds {
  std::size_t query = 0;
  std::size_t positive = 0;
  std::size_t negative = 0;
};

// item index, rng -> triple. Items are visited once per epoch in a shuffled order.
using TripleSampler = std::function<TripleIds(std::size_t item, std::size_t epoch, std::mt19937_64& rng)>;

DenseModel run_contrastive_training(DenseModel model, std::size_t items, const TripleSampler& sample,
                                    const QuerySet& queries, const Corpus& corpus,
                                    const TrainConfig& cfg, TrainStats* stats) {
  const auto opt_cfg = cfg.optimizer_config();
  RowOptimizer<float> q_opt(opt_cfg, model.query_table.size());
  RowOptimizer<float> p_opt(opt_cfg, model.passage_table.size());

  auto noisy = [&](TokenSeq tokens, bool enabled, std::uint64_t seed) {
    if (!enabled || cfg.noise.rate == 0.0) return tokens;
    NoiseConfig nc = cfg.noise;
    nc.seed = seed;
    return corrupt(std::move(tokens), nc);
  };

  std::vector<ContrastiveTriple> batch;
  batch.reserve(cfg.batch_size);
  double epoch_total = 0.0;
  std::size_t epoch_batches = 0;

  auto flush = [&] {
    if (batch.empty()) return;
    auto result = contrastive_loss(model, std::span<const ContrastiveTriple>(batch), cfg.temperature);
    q_opt.next_step();
    p_opt.next_step();
    q_opt.update_rows(model.query_table, model.dim, result.grad.query);
    p_opt.update_rows(model.passage_table, model.dim, result.grad.passage);
    epoch_total += result.loss;
    ++epoch_batches;
    if (stats) ++stats->steps;
    batch.clear();
  };

  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x5eed, epoch));
    std::vector<std::size_t> order(items);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);
    epoch_total = 0.0;
    epoch_batches = 0;
    for (auto item : order) {
      auto ids = sample(item, epoch, rng);
      // Noise streams are keyed by query id, not by position in the example list.
      const auto query_seed = derive_seed(cfg.seed, queries[ids.query].id);
      ContrastiveTriple triple;
      triple.query = noisy(tokenize(queries[ids.query].text), cfg.noise_queries,
                           derive_seed(query_seed, epoch, 1));
      triple.positive = noisy(tokenize(corpus.indexed_text(ids.positive, cfg.include_title)),
                              cfg.noise_passages, derive_seed(query_seed, epoch, 2));
      triple.negative = noisy(tokenize(corpus.indexed_text(ids.negative, cfg.include_title)),
                              cfg.noise_passages, derive_seed(query_seed, epoch, 3));
      batch.push_back(std::move(triple));
      if (batch.size() == cfg.batch_size) flush();
    }
    flush();
    if (stats) {
      stats->epoch_loss.push_back(epoch_batches ? epoch_total / static_cast<double>(epoch_batches) : 0.0);
    }
  }
  return model;
}

std::size_t uniform_index(std::size_t n, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

std::string to_string(OptimizerKind kind) { return kind == OptimizerKind::Sgd ? "sgd" : "adam"; }

OptimizerKind optimizer_from_string(const std::string& name) {
  if (name == "sgd") return OptimizerKind::Sgd;
  if (name == "adam") return OptimizerKind::Adam;
  throw ConfigError("unknown optimizer \"" + name + "\" (expected sgd or adam)");
}

// ---- Model -----------------------------------------------------------------

template <class T>
BasicDenseModel<T> BasicDenseModel<T>::initialize(std::uint32_t buckets, std::uint32_t dim,
                                                  std::uint64_t seed, double sigma) {
  if (buckets == 0 || dim == 0) throw ConfigError("dense model: buckets and dim must be >= 1");
  BasicDenseModel m;
  m.buckets = buckets;
  m.dim = dim;
  m.seed = seed;
  m.query_table.resize(static_cast<std::size_t>(buckets) * dim);
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sigma);
  for (auto& x : m.query_table) x = static_cast<T>(normal(rng));
  m.passage_table = m.query_table;
  return m;
}

template <class T>
std::uint64_t BasicDenseModel<T>::checksum() const {
  std::uint64_t h = fnv1a64("dense");
  h = hash_value<std::uint32_t>(buckets, h);
  h = hash_value<std::uint32_t>(dim, h);
  h = hash_value<std::uint64_t>(seed, h);
  h = hash_bytes(query_table, h);
  return hash_bytes(passage_table, h);
}

template <class T>
void BasicDenseModel<T>::validate() const {
  const std::size_t n = static_cast<std::size_t>(buckets) * dim;
  if (dim == 0 || buckets == 0 || query_table.size() != n || passage_table.size() != n) {
    throw DataError("dense model: table shape mismatch");
  }
  auto finite = [](T x) { return std::isfinite(static_cast<double>(x)); };
  if (!std::all_of(query_table.begin(), query_table.end(), finite) ||
      !std::all_of(passage_table.begin(), passage_table.end(), finite)) {
    throw DataError("dense model: non-finite parameter");
  }
}

template struct BasicDenseModel<float>;
template struct BasicDenseModel<double>;

std::vector<std::uint32_t> bucket_ids(const TokenSeq& tokens, std::uint32_t buckets) {
  std::vector<std::uint32_t> ids;
  ids.reserve(tokens.size());
  for (const auto& t : tokens) ids.push_back(hash_token(t, buckets));
  return ids;
}

template <class T>
std::vector<double> encode(const BasicDenseModel<T>& model, Side side, const TokenSeq& tokens) {
  return encode_ids(model, side, bucket_ids(tokens, model.buckets));
}

template std::vector<double> encode(const BasicDenseModel<float>&, Side, const TokenSeq&);
template std::vector<double> encode(const BasicDenseModel<double>&, Side, const TokenSeq&);

double score(std::span<const double> query_vec, std::span<const double> passage_vec) {
  return dot(query_vec, passage_vec);
}

// ---- Contrastive loss ------------------------------------------------------

template <class T>
LossResult contrastive_loss(const BasicDenseModel<T>& model,
                            std::span<const ContrastiveTriple> batch, double temperature) {
  if (batch.empty()) throw ConfigError("contrastive_loss: empty batch");
  if (!(temperature > 0.0)) throw ConfigError("contrastive_loss: temperature must be > 0");
  const std::size_t n = batch.size();
  const std::size_t dim = model.dim;

  std::vector<std::vector<std::uint32_t>> q_ids(n), c_ids(2 * n);
  std::vector<std::vector<double>> q_vec(n), c_vec(2 * n);
  for (std::size_t i = 0; i < n; ++i) {
    q_ids[i] = bucket_ids(batch[i].query, model.buckets);
    c_ids[2 * i] = bucket_ids(batch[i].positive, model.buckets);
    c_ids[2 * i + 1] = bucket_ids(batch[i].negative, model.buckets);
    q_vec[i] = encode_ids(model, Side::Query, q_ids[i]);
    c_vec[2 * i] = encode_ids(model, Side::Passage, c_ids[2 * i]);
    c_vec[2 * i + 1] = encode_ids(model, Side::Passage, c_ids[2 * i + 1]);
  }

  LossResult result;
  std::vector<std::vector<double>> q_grad(n, std::vector<double>(dim, 0.0));
  std::vector<std::vector<double>> c_grad(2 * n, std::vector<double>(dim, 0.0));
  std::vector<double> logits(2 * n);
  const double inv_batch = 1.0 / static_cast<double>(n);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < 2 * n; ++j) logits[j] = dot(q_vec[i], c_vec[j]) / temperature;
    result.loss += (log_sum_exp(logits) - logits[2 * i]) * inv_batch;
    auto probs = softmax(logits);
    for (std::size_t j = 0; j < 2 * n; ++j) {
      const double g = (probs[j] - (j == 2 * i ? 1.0 : 0.0)) * inv_batch / temperature;
      if (g == 0.0) continue;
      for (std::size_t d = 0; d < dim; ++d) {
        q_grad[i][d] += g * c_vec[j][d];
        c_grad[j][d] += g * q_vec[i][d];
      }
    }
  }
  for (std::size_t i = 0; i < n; ++i) scatter_mean_grad(result.grad.query, q_ids[i], q_grad[i]);
  for (std::size_t j = 0; j < 2 * n; ++j) scatter_mean_grad(result.grad.passage, c_ids[j], c_grad[j]);
  return result;
}

template LossResult contrastive_loss(const BasicDenseModel<float>&, std::span<const ContrastiveTriple>, double);
template LossResult contrastive_loss(const BasicDenseModel<double>&, std::span<const ContrastiveTriple>, double);

std::vector<double> soft_labels(const DenseModel& model, std::string_view query,
                                std::span<const std::string> passages, double temperature) {
  if (passages.empty()) throw ConfigError("soft_labels: no passages");
  auto q = encode(model, Side::Query, query);
  std::vector<double> scores;
  scores.reserve(passages.size());
  for (const auto& p : passages) scores.push_back(dot(q, encode(model, Side::Passage, p)));
  return softmax(scores, temperature);
}

// ---- Passage matrix --------------------------------------------------------

PassageMatrix encode_corpus(const DenseModel& model, const Corpus& corpus, std::size_t threads,
                            bool include_title) {
  PassageMatrix matrix;
  matrix.dim = model.dim;
  matrix.model_checksum = model.checksum();
  matrix.corpus_checksum = corpus.checksum();
  matrix.data.resize(corpus.size() * model.dim);
  parallel_for(corpus.size(), threads, [&](std::size_t i) {
    auto vec = encode(model, Side::Passage, corpus.indexed_text(i, include_title));
    std::copy(vec.begin(), vec.end(), matrix.data.begin() + static_cast<std::ptrdiff_t>(i * model.dim));
  });
  return matrix;
}

// Layout: "ABPM1" u32 version u32 dim u64 model_checksum u64 corpus_checksum
//         u64 rows, rows x dim f64
void save_passage_matrix(const PassageMatrix& matrix, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out.write(kMatrixMagic.data(), static_cast<std::streamsize>(kMatrixMagic.size()));
  binio::write<std::uint32_t>(out, kVersion);
  binio::write<std::uint32_t>(out, matrix.dim);
  binio::write<std::uint64_t>(out, matrix.model_checksum);
  binio::write<std::uint64_t>(out, matrix.corpus_checksum);
  binio::write<std::uint64_t>(out, matrix.rows());
  binio::write_array(out, matrix.data);
}

PassageMatrix load_passage_matrix(const std::filesystem::path& path) {
  constexpr std::string_view what = "passage matrix";
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  binio::expect_magic(in, kMatrixMagic, what);
  if (binio::read<std::uint32_t>(in, what) != kVersion) throw DataError("passage matrix: bad version");
  PassageMatrix m;
  m.dim = binio::read<std::uint32_t>(in, what);
  m.model_checksum = binio::read<std::uint64_t>(in, what);
  m.corpus_checksum = binio::read<std::uint64_t>(in, what);
  auto rows = binio::read<std::uint64_t>(in, what);
  m.data = binio::read_array<double>(in, rows * m.dim, what);
  binio::expect_end(in, what);
  return m;
}

PassageMatrix cached_passage_matrix(const DenseModel& model, const Corpus& corpus,
                                    const std::filesystem::path& path, std::size_t threads,
                                    bool include_title) {
  if (std::filesystem::exists(path)) {
    try {
      auto cached = load_passage_matrix(path);
      if (cached.model_checksum == model.checksum() && cached.corpus_checksum == corpus.checksum() &&
          cached.dim == model.dim && cached.rows() == corpus.size()) {
        return cached;
      }
    } catch (const DataError&) {
      // unreadable cache: rebuild below
    }
  }
  auto matrix = encode_corpus(model, corpus, threads, include_title);
  save_passage_matrix(matrix, path);
  return matrix;
}

std::vector<Hit> dense_search(std::span<const double> query_vec, const PassageMatrix& matrix,
                              std::size_t k) {
  if (k < 1) throw ConfigError("dense search: k must be >= 1");
  if (query_vec.size() != matrix.dim) throw DataError("dense search: dimension mismatch");
  std::vector<double> scores(matrix.rows());
  for (std::size_t i = 0; i < scores.size(); ++i) scores[i] = dot(query_vec, matrix.row(i));
  return top_k(scores, k);
}

std::vector<Hit> dense_search(const DenseModel& model, const PassageMatrix& matrix,
                              std::string_view query, std::size_t k) {
  return dense_search(encode(model, Side::Query, query), matrix, k);
}

// ---- Training --------------------------------------------------------------

void TrainConfig::validate() const {
  if (epochs < 1) throw ConfigError("train: epochs must be >= 1");
  if (batch_size < 1) throw ConfigError("train: batch_size must be >= 1");
  if (!(learning_rate >= 0.0)) throw ConfigError("train: learning_rate must be >= 0");
  if (!(temperature > 0.0)) throw ConfigError("train: temperature must be > 0");
  noise.validate();
}

OptimizerConfig TrainConfig::optimizer_config() const {
  return OptimizerConfig{optimizer, learning_rate, beta1, beta2, epsilon};
}

DenseModel train_retriever(DenseModel model, std::span<const TrainingExample> examples,
                           const QuerySet& queries, const Corpus& corpus, const TrainConfig& cfg,
                           TrainStats* stats) {
  cfg.validate();
  model.validate();
  struct Resolved {
    std::size_t query;
    std::vector<std::size_t> positives;
    std::vector<std::size_t> negatives;
  };
  std::vector<Resolved> usable;
  std::size_t skipped = 0;
  for (const auto& ex : examples) {
    if (!ex.usable()) {
      ++skipped;
      continue;
    }
    auto q = queries.find(ex.query_id);
    if (!q) throw DataError("train: unknown query id \"" + ex.query_id + "\"");
    Resolved r{*q, {}, {}};
    for (const auto& id : ex.positives) r.positives.push_back(corpus.ordinal(id));
    for (const auto& id : ex.negatives) r.negatives.push_back(corpus.ordinal(id));
    usable.push_back(std::move(r));
  }
  if (stats) {
    *stats = TrainStats{};
    stats->skipped_examples = skipped;
  }
  auto sampler = [&](std::size_t item, std::size_t, std::mt19937_64& rng) {
    const auto& r = usable[item];
    TripleIds ids;
    ids.query = r.query;
    ids.positive = r.positives[uniform_index(r.positives.size(), rng)];
    ids.negative = r.negatives[uniform_index(r.negatives.size(), rng)];
    return ids;
  };
  return run_contrastive_training(std::move(model), usable.size(), sampler, queries, corpus, cfg, stats);
}

FinetuneResult finetune_supervised(const DenseModel& model, const Qrels& qrels,
                                   const QuerySet& queries, const Corpus& corpus,
                                   const FinetuneConfig& cfg) {
  cfg.train.validate();
  if (qrels.empty()) throw DataError("finetune: qrels are empty");
  if (!(cfg.hard_negative_prob >= 0.0 && cfg.hard_negative_prob <= 1.0)) {
    throw ConfigError("finetune: hard_negative_prob must lie in [0, 1]");
  }
  if (cfg.mine_depth < 1) throw ConfigError("finetune: mine_depth must be >= 1");

  struct Supervised {
    std::size_t query;
    std::vector<std::size_t> positives;
    std::set<std::size_t> positive_set;
    std::vector<std::size_t> mined;
  };
  FinetuneResult result;
  std::vector<Supervised> items;
  for (const auto& [qid, grades] : qrels) {
    auto q = queries.find(qid);
    Supervised s{};
    for (const auto& [pid, grade] : grades) {
      auto o = corpus.find(pid);
      if (grade > 0 && o) {
        s.positives.push_back(*o);
        s.positive_set.insert(*o);
      }
    }
    if (!q || s.positives.empty() || s.positive_set.size() >= corpus.size()) {
      ++result.skipped_queries;
      continue;
    }
    s.query = *q;
    items.push_back(std::move(s));
  }
  if (items.empty()) throw DataError("finetune: no query has a gold positive");

  auto random_negative = [&](const Supervised& s, std::mt19937_64& rng) {
    while (true) {
      auto o = uniform_index(corpus.size(), rng);
      if (!s.positive_set.count(o)) return o;
    }
  };
  auto stage1_sampler = [&](std::size_t item, std::size_t, std::mt19937_64& rng) {
    const auto& s = items[item];
    TripleIds ids;
    ids.query = s.query;
    ids.positive = s.positives[uniform_index(s.positives.size(), rng)];
    ids.negative = random_negative(s, rng);
    return ids;
  };
  result.stage1 = run_contrastive_training(model, items.size(), stage1_sampler, queries, corpus,
                                           cfg.train, nullptr);

  auto matrix = encode_corpus(result.stage1, corpus, cfg.threads, cfg.train.include_title);
  parallel_for(items.size(), cfg.threads, [&](std::size_t i) {
    auto& s = items[i];
    auto hits = dense_search(result.stage1, matrix, queries[s.query].text,
                             cfg.mine_depth + s.positive_set.size());
    for (const auto& h : hits) {
      if (s.mined.size() == cfg.mine_depth) break;
      if (!s.positive_set.count(h.ordinal)) s.mined.push_back(h.ordinal);
    }
  });
  for (const auto& s : items) {
    auto& ids = result.mined[queries[s.query].id];
    for (auto o : s.mined) ids.push_back(corpus[o].id);
  }

  // The hard/random coin has its own stream so that probability 0 replays
  // stage 1 exactly.
  auto stage2_sampler = [&](std::size_t item, std::size_t epoch, std::mt19937_64& rng) {
    const auto& s = items[item];
    TripleIds ids;
    ids.query = s.query;
    ids.positive = s.positives[uniform_index(s.positives.size(), rng)];
    if (cfg.hard_negative_prob > 0.0 && !s.mined.empty()) {
      std::mt19937_64 coin(derive_seed(cfg.train.seed, 0xbadd, epoch, item));
      if (std::uniform_real_distribution<double>(0.0, 1.0)(coin) < cfg.hard_negative_prob) {
        ids.negative = s.mined[uniform_index(s.mined.size(), coin)];
        return ids;
      }
    }
    ids.negative = random_negative(s, rng);
    return ids;
  };
  result.stage2 = run_contrastive_training(model, items.size(), stage2_sampler, queries, corpus,
                                           cfg.train, nullptr);
  return result;
}

// ---- Checkpoints -----------------------------------------------------------

// Layout: "ABDM1" u32 version u32 buckets u32 dim u64 seed
//         f32 query_table[buckets*dim] f32 passage_table[buckets*dim]
//         u64 fnv1a64 of the two tables' bytes
void write_checkpoint(const DenseModel& model, std::ostream& out) {
  model.validate();
  out.write(kCheckpointMagic.data(), static_cast<std::streamsize>(kCheckpointMagic.size()));
  binio::write<std::uint32_t>(out, kVersion);
  binio::write<std::uint32_t>(out, model.buckets);
  binio::write<std::uint32_t>(out, model.dim);
  binio::write<std::uint64_t>(out, model.seed);
  binio::write_array(out, model.query_table);
  binio::write_array(out, model.passage_table);
  binio::write<std::uint64_t>(out, hash_bytes(model.passage_table, hash_bytes(model.query_table, fnv1a64("ABDM1"))));
}

DenseModel read_checkpoint(std::istream& in) {
  constexpr std::string_view what = "dense checkpoint";
  binio::expect_magic(in, kCheckpointMagic, what);
  if (auto v = binio::read<std::uint32_t>(in, what); v != kVersion) {
    throw DataError("dense checkpoint: unsupported version " + std::to_string(v));
  }
  DenseModel m;
  m.buckets = binio::read<std::uint32_t>(in, what);
  m.dim = binio::read<std::uint32_t>(in, what);
  m.seed = binio::read<std::uint64_t>(in, what);
  const std::size_t n = static_cast<std::size_t>(m.buckets) * m.dim;
  m.query_table = binio::read_array<float>(in, n, what);
  m.passage_table = binio::read_array<float>(in, n, what);
  auto stored = binio::read<std::uint64_t>(in, what);
  if (stored != hash_bytes(m.passage_table, hash_bytes(m.query_table, fnv1a64("ABDM1")))) {
    throw DataError("dense checkpoint: checksum mismatch");
  }
  binio::expect_end(in, what);
  m.validate();
  return m;
}

void save_checkpoint(const DenseModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  write_checkpoint(model, out);
}

DenseModel load_dense_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_checkpoint(in);
}

}  // namespace altboot
