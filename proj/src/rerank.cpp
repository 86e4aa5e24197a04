#include "altboot/rerank.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <unordered_map>
#include <unordered_set>

#include "altboot/binary_io.hpp"
#include "altboot/error.hpp"
#include "altboot/math.hpp"
#include "altboot/parallel.hpp"

namespace altboot {

namespace {

constexpr std::string_view kMagic = "ABRR1";
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

struct LexicalOverlap {
  double jaccard = 0.0;
  double coverage = 0.0;
};

LexicalOverlap lexical_overlap(const TokenSeq& query, const TokenSeq& passage) {
  std::unordered_set<std::string_view> q(query.begin(), query.end());
  std::unordered_set<std::string_view> p(passage.begin(), passage.end());
  std::size_t common = 0;
  for (auto t : q) common += p.count(t);
  const std::size_t uni = q.size() + p.size() - common;
  LexicalOverlap out;
  if (uni > 0) out.jaccard = static_cast<double>(common) / static_cast<double>(uni);
  if (!q.empty()) out.coverage = static_cast<double>(common) / static_cast<double>(q.size());
  return out;
}

template <class T>
std::vector<double> mean_rows(const BasicRerankModel<T>& model, const std::vector<std::uint32_t>& ids) {
  std::vector<double> out(model.dim, 0.0);
  if (ids.empty()) return out;
  for (auto id : ids) {
    const T* row = model.embed.data() + static_cast<std::size_t>(id) * model.dim;
    for (std::size_t d = 0; d < model.dim; ++d) out[d] += static_cast<double>(row[d]);
  }
  for (auto& x : out) x /= static_cast<double>(ids.size());
  return out;
}

struct Forward {
  std::vector<std::uint32_t> q_ids;
  std::vector<std::uint32_t> p_ids;
  std::vector<double> qm;
  std::vector<double> pm;
  std::vector<double> features;
  std::vector<double> activation;
  double score = 0.0;
};

template <class T>
Forward forward(const BasicRerankModel<T>& model, const TokenSeq& query, const TokenSeq& passage) {
  Forward fw;
  const std::size_t dim = model.dim;
  fw.q_ids = bucket_ids(query, model.buckets);
  fw.p_ids = bucket_ids(passage, model.buckets);
  fw.qm = mean_rows(model, fw.q_ids);
  fw.pm = mean_rows(model, fw.p_ids);
  fw.features.resize(model.features());
  for (std::size_t d = 0; d < dim; ++d) {
    fw.features[d] = fw.qm[d];
    fw.features[dim + d] = fw.pm[d];
    fw.features[2 * dim + d] = fw.qm[d] * fw.pm[d];
  }
  auto lex = lexical_overlap(query, passage);
  fw.features[3 * dim] = lex.jaccard;
  fw.features[3 * dim + 1] = lex.coverage;

  const std::size_t nf = model.features();
  fw.activation.resize(model.hidden);
  fw.score = static_cast<double>(model.b2);
  for (std::size_t h = 0; h < model.hidden; ++h) {
    double pre = static_cast<double>(model.b1[h]);
    const T* row = model.w1.data() + h * nf;
    for (std::size_t i = 0; i < nf; ++i) pre += static_cast<double>(row[i]) * fw.features[i];
    fw.activation[h] = std::tanh(pre);
    fw.score += static_cast<double>(model.w2[h]) * fw.activation[h];
  }
  return fw;
}


template <class T>
void init_grad(const BasicRerankModel<T>& model, RerankGrad& g) {
  g.w1.assign(model.w1.size(), 0.0);
  g.b1.assign(model.hidden, 0.0);
  g.w2.assign(model.hidden, 0.0);
  g.b2 = 0.0;
}

// Accumulates upstream * d score / d params.
template <class T>
void backward(const BasicRerankModel<T>& model, const Forward& fw, double upstream, RerankGrad& g) {
  if (upstream == 0.0) return;
  const std::size_t dim = model.dim;
  const std::size_t nf = model.features();
  std::vector<double> d_features(nf, 0.0);
  g.b2 += upstream;
  for (std::size_t h = 0; h < model.hidden; ++h) {
    const double a = fw.activation[h];
    g.w2[h] += upstream * a;
    const double delta = upstream * static_cast<double>(model.w2[h]) * (1.0 - a * a);
    g.b1[h] += delta;
    const T* row = model.w1.data() + h * nf;
    double* grow = g.w1.data() + h * nf;
    for (std::size_t i = 0; i < nf; ++i) {
      grow[i] += delta * fw.features[i];
      d_features[i] += delta * static_cast<double>(row[i]);
    }
  }
  std::vector<double> d_qm(dim), d_pm(dim);
  for (std::size_t d = 0; d < dim; ++d) {
    d_qm[d] = d_features[d] + d_features[2 * dim + d] * fw.pm[d];
    d_pm[d] = d_features[dim + d] + d_features[2 * dim + d] * fw.qm[d];
  }
  auto scatter = [&](const std::vector<std::uint32_t>& ids, const std::vector<double>& vec) {
    if (ids.empty()) return;
    const double scale = 1.0 / static_cast<double>(ids.size());
    for (auto id : ids) {
      auto& row = g.embed[id];
      if (row.empty()) row.assign(dim, 0.0);
      for (std::size_t d = 0; d < dim; ++d) row[d] += scale * vec[d];
    }
  };
  scatter(fw.q_ids, d_qm);
  scatter(fw.p_ids, d_pm);
}

void scale_grad(RerankGrad& g, double s) {
  for (auto& [row, v] : g.embed) for (auto& x : v) x *= s;
  for (auto& x : g.w1) x *= s;
  for (auto& x : g.b1) x *= s;
  for (auto& x : g.w2) x *= s;
  g.b2 *= s;
}

void add_grad(RerankGrad& into, const RerankGrad& g) {
  for (const auto& [row, v] : g.embed) {
    auto& dst = into.embed[row];
    if (dst.empty()) dst.assign(v.size(), 0.0);
    for (std::size_t i = 0; i < v.size(); ++i) dst[i] += v[i];
  }
  for (std::size_t i = 0; i < g.w1.size(); ++i) into.w1[i] += g.w1[i];
  for (std::size_t i = 0; i < g.b1.size(); ++i) into.b1[i] += g.b1[i];
  for (std::size_t i = 0; i < g.w2.size(); ++i) into.w2[i] += g.w2[i];
  into.b2 += g.b2;
}

std::size_t uniform_index(std::size_t n, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
}

}  // namespace

// ---- Model -----------------------------------------------------------------

template <class T>
BasicRerankModel<T> BasicRerankModel<T>::zeros(std::uint32_t buckets, std::uint32_t dim,
                                               std::uint32_t hidden) {
  if (buckets == 0 || dim == 0 || hidden == 0) {
    throw ConfigError("reranker: buckets, dim and hidden must be >= 1");
  }
  BasicRerankModel m;
  m.buckets = buckets;
  m.dim = dim;
  m.hidden = hidden;
  m.embed.assign(static_cast<std::size_t>(buckets) * dim, T{0});
  m.w1.assign(static_cast<std::size_t>(hidden) * m.features(), T{0});
  m.b1.assign(hidden, T{0});
  m.w2.assign(hidden, T{0});
  m.b2 = T{0};
  return m;
}

template <class T>
BasicRerankModel<T> BasicRerankModel<T>::initialize(std::uint32_t buckets, std::uint32_t dim,
                                                    std::uint32_t hidden, std::uint64_t seed,
                                                    double embed_sigma) {
  auto m = zeros(buckets, dim, hidden);
  m.seed = seed;
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> e(0.0, embed_sigma);
  for (auto& x : m.embed) x = static_cast<T>(e(rng));
  std::normal_distribution<double> a(0.0, 1.0 / std::sqrt(static_cast<double>(m.features())));
  for (auto& x : m.w1) x = static_cast<T>(a(rng));
  std::normal_distribution<double> b(0.0, 1.0 / std::sqrt(static_cast<double>(hidden)));
  for (auto& x : m.w2) x = static_cast<T>(b(rng));
  return m;
}

template <class T>
std::uint64_t BasicRerankModel<T>::checksum() const {
  std::uint64_t h = fnv1a64("rerank");
  h = hash_value<std::uint32_t>(buckets, h);
  h = hash_value<std::uint32_t>(dim, h);
  h = hash_value<std::uint32_t>(hidden, h);
  h = hash_value<std::uint64_t>(seed, h);
  h = hash_bytes(embed, h);
  h = hash_bytes(w1, h);
  h = hash_bytes(b1, h);
  h = hash_bytes(w2, h);
  return hash_value<T>(b2, h);
}

template <class T>
void BasicRerankModel<T>::validate() const {
  if (buckets == 0 || dim == 0 || hidden == 0 ||
      embed.size() != static_cast<std::size_t>(buckets) * dim ||
      w1.size() != static_cast<std::size_t>(hidden) * features() || b1.size() != hidden ||
      w2.size() != hidden) {
    throw DataError("reranker: parameter shape mismatch");
  }
  auto finite = [](T x) { return std::isfinite(static_cast<double>(x)); };
  for (const auto* v : {&embed, &w1, &b1, &w2}) {
    if (!std::all_of(v->begin(), v->end(), finite)) throw DataError("reranker: non-finite parameter");
  }
  if (!finite(b2)) throw DataError("reranker: non-finite parameter");
}

template struct BasicRerankModel<float>;
template struct BasicRerankModel<double>;

template <class T>
std::vector<double> pair_features(const BasicRerankModel<T>& model, const TokenSeq& query,
                                  const TokenSeq& passage) {
  return forward(model, query, passage).features;
}

template <class T>
double rerank_score(const BasicRerankModel<T>& model, const TokenSeq& query, const TokenSeq& passage) {
  return forward(model, query, passage).score;
}

template std::vector<double> pair_features(const BasicRerankModel<float>&, const TokenSeq&, const TokenSeq&);
template std::vector<double> pair_features(const BasicRerankModel<double>&, const TokenSeq&, const TokenSeq&);
template double rerank_score(const BasicRerankModel<float>&, const TokenSeq&, const TokenSeq&);
template double rerank_score(const BasicRerankModel<double>&, const TokenSeq&, const TokenSeq&);

double rerank_score(const RerankModel& model, std::string_view query, std::string_view passage) {
  return rerank_score(model, tokenize(query), tokenize(passage));
}

RankedList rerank(const RerankModel& model, std::string_view query, const RankedList& candidates,
                  std::size_t depth, const Corpus& corpus, bool include_title) {
  const std::size_t n = std::min(depth, candidates.size());
  const auto q = tokenize(query);
  std::vector<std::pair<double, std::size_t>> block(n);
  for (std::size_t i = 0; i < n; ++i) {
    auto ordinal = corpus.ordinal(candidates.entries[i].passage_id);
    block[i] = {rerank_score(model, q, tokenize(corpus.indexed_text(ordinal, include_title))), i};
  }
  std::stable_sort(block.begin(), block.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  RankedList out{candidates.query_id, {}};
  out.entries.reserve(candidates.size());
  for (const auto& [s, i] : block) {
    out.entries.push_back(RankedEntry{candidates.entries[i].passage_id, s, out.entries.size() + 1});
  }
  for (std::size_t i = n; i < candidates.size(); ++i) {
    auto e = candidates.entries[i];
    e.rank = out.entries.size() + 1;
    out.entries.push_back(std::move(e));
  }
  return out;
}

// ---- Losses ----------------------------------------------------------------

std::string to_string(KlDirection direction) {
  return direction == KlDirection::StudentTeacher ? "student_teacher" : "teacher_student";
}

KlDirection kl_direction_from_string(const std::string& name) {
  if (name == "student_teacher") return KlDirection::StudentTeacher;
  if (name == "teacher_student") return KlDirection::TeacherStudent;
  throw ConfigError("unknown kl_direction \"" + name + "\" (expected student_teacher or teacher_student)");
}

void SoftLabelSet::validate() const {
  if (passage_ids.size() != teacher_probs.size() || passage_ids.size() < 2) {
    throw DataError("soft labels for " + query_id + ": need >= 2 passages with one probability each");
  }
  double total = std::accumulate(teacher_probs.begin(), teacher_probs.end(), 0.0);
  if (std::abs(total - 1.0) > 1e-9) {
    throw DataError("soft labels for " + query_id + ": probabilities sum to " + std::to_string(total));
  }
}

template <class T>
RerankLoss kl_loss(const BasicRerankModel<T>& model, const TokenSeq& query,
                   std::span<const TokenSeq> passages, std::span<const double> teacher,
                   KlDirection direction) {
  if (passages.size() != teacher.size() || passages.empty()) {
    throw DataError("kl_loss: passages and teacher probabilities differ in length");
  }
  for (double t : teacher) {
    if (!(t > 0.0)) throw DataError("kl_loss: teacher probability must be > 0");
  }
  std::vector<Forward> fws;
  std::vector<double> scores;
  for (const auto& p : passages) {
    fws.push_back(forward(model, query, p));
    scores.push_back(fws.back().score);
  }
  const auto student = softmax(scores);
  const double lse = log_sum_exp(scores);
  RerankLoss out;
  init_grad(model, out.grad);
  std::vector<double> d_scores(scores.size());
  if (direction == KlDirection::StudentTeacher) {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double log_s = scores[i] - lse;
      out.loss += student[i] * (log_s - std::log(teacher[i]));
    }
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const double log_s = scores[i] - lse;
      d_scores[i] = student[i] * (log_s - std::log(teacher[i]) - out.loss);
    }
  } else {
    for (std::size_t i = 0; i < scores.size(); ++i) {
      out.loss += teacher[i] * (std::log(teacher[i]) - (scores[i] - lse));
      d_scores[i] = student[i] - teacher[i];
    }
  }
  for (std::size_t i = 0; i < fws.size(); ++i) backward(model, fws[i], d_scores[i], out.grad);
  return out;
}

template RerankLoss kl_loss(const BasicRerankModel<float>&, const TokenSeq&, std::span<const TokenSeq>,
                            std::span<const double>, KlDirection);
template RerankLoss kl_loss(const BasicRerankModel<double>&, const TokenSeq&, std::span<const TokenSeq>,
                            std::span<const double>, KlDirection);

RerankLoss kl_loss(const RerankModel& model, std::string_view query, const SoftLabelSet& labels,
                   const Corpus& corpus, const NoiseConfig* noise, KlDirection direction,
                   bool include_title) {
  labels.validate();
  auto q = tokenize(query);
  std::vector<TokenSeq> passages;
  for (const auto& id : labels.passage_ids) {
    passages.push_back(tokenize(corpus.indexed_text(corpus.ordinal(id), include_title)));
  }
  if (noise && noise->rate > 0.0) {
    NoiseConfig nc = *noise;
    q = corrupt(std::move(q), nc);
    for (std::size_t i = 0; i < passages.size(); ++i) {
      nc.seed = derive_seed(noise->seed, i + 1);
      passages[i] = corrupt(std::move(passages[i]), nc);
    }
  }
  return kl_loss(model, q, std::span<const TokenSeq>(passages), labels.teacher_probs, direction);
}

template <class T>
RerankLoss ce_loss(const BasicRerankModel<T>& model, const TokenSeq& query, const TokenSeq& positive,
                   std::span<const TokenSeq> negatives) {
  if (negatives.empty()) throw ConfigError("ce_loss: need at least one negative");
  std::vector<Forward> fws;
  fws.push_back(forward(model, query, positive));
  for (const auto& n : negatives) fws.push_back(forward(model, query, n));
  std::vector<double> scores;
  for (const auto& fw : fws) scores.push_back(fw.score);
  RerankLoss out;
  init_grad(model, out.grad);
  out.loss = log_sum_exp(scores) - scores[0];
  const auto probs = softmax(scores);
  for (std::size_t i = 0; i < fws.size(); ++i) {
    backward(model, fws[i], probs[i] - (i == 0 ? 1.0 : 0.0), out.grad);
  }
  return out;
}

template RerankLoss ce_loss(const BasicRerankModel<float>&, const TokenSeq&, const TokenSeq&,
                            std::span<const TokenSeq>);
template RerankLoss ce_loss(const BasicRerankModel<double>&, const TokenSeq&, const TokenSeq&,
                            std::span<const TokenSeq>);

// ---- Training --------------------------------------------------------------

void RerankTrainConfig::validate() const {
  if (buckets == 0 || dim == 0 || hidden == 0) throw ConfigError("reranker: buckets, dim, hidden must be >= 1");
  if (batch_size < 1) throw ConfigError("reranker: batch_size must be >= 1");
  if (negatives < 1) throw ConfigError("reranker: negatives must be >= 1");
  if (pool_first_rank < 1 || pool_last_rank < pool_first_rank) {
    throw ConfigError("reranker: invalid negative pool ranks");
  }
  if (!(learning_rate >= 0.0)) throw ConfigError("reranker: learning_rate must be >= 0");
  if (!(teacher_temperature > 0.0)) throw ConfigError("reranker: teacher_temperature must be > 0");
  noise.validate();
}

OptimizerConfig RerankTrainConfig::optimizer_config() const {
  return OptimizerConfig{optimizer, learning_rate, beta1, beta2, epsilon};
}

RerankModel RerankTrainConfig::fresh_model() const {
  return RerankModel::initialize(buckets, dim, hidden, init_seed, embed_sigma);
}

std::vector<CandidatePool> build_candidate_pools(const DenseModel& retriever,
                                                 const PassageMatrix& matrix,
                                                 const QuerySet& queries, std::size_t depth,
                                                 std::size_t positives, std::size_t threads) {
  std::vector<CandidatePool> pools(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    pools[i].query = i;
    pools[i].hits = dense_search(retriever, matrix, queries[i].text, depth);
    for (std::size_t r = 0; r < std::min(positives, pools[i].hits.size()); ++r) {
      pools[i].positives.push_back(pools[i].hits[r].ordinal);
    }
  });
  return pools;
}

std::optional<SoftLabelSet> sample_soft_labels(const CandidatePool& pool, const QuerySet& queries,
                                               const Corpus& corpus, const RerankTrainConfig& cfg,
                                               std::uint64_t seed) {
  if (pool.positives.empty()) return std::nullopt;
  std::unordered_set<std::size_t> positive_set(pool.positives.begin(), pool.positives.end());
  std::vector<const Hit*> negatives;
  std::unordered_map<std::size_t, const Hit*> by_ordinal;
  for (std::size_t r = 0; r < pool.hits.size(); ++r) {
    const auto& h = pool.hits[r];
    by_ordinal.emplace(h.ordinal, &h);
    const std::size_t rank = r + 1;
    if (rank >= cfg.pool_first_rank && rank <= cfg.pool_last_rank && !positive_set.count(h.ordinal)) {
      negatives.push_back(&h);
    }
  }
  if (negatives.empty()) return std::nullopt;
  std::mt19937_64 rng(seed);
  const auto pos_ordinal = pool.positives[uniform_index(pool.positives.size(), rng)];
  auto pos_it = by_ordinal.find(pos_ordinal);
  if (pos_it == by_ordinal.end()) return std::nullopt;

  std::vector<const Hit*> chosen;
  std::sample(negatives.begin(), negatives.end(), std::back_inserter(chosen),
              std::min(cfg.negatives, negatives.size()), rng);
  SoftLabelSet set;
  set.query_id = queries[pool.query].id;
  std::vector<double> scores;
  set.passage_ids.push_back(corpus[pos_ordinal].id);
  scores.push_back(pos_it->second->score);
  for (const auto* h : chosen) {
    set.passage_ids.push_back(corpus[h->ordinal].id);
    scores.push_back(h->score);
  }
  set.teacher_probs = softmax(scores, cfg.teacher_temperature);
  return set;
}

RerankModel train_reranker_from(RerankModel model, std::span<const CandidatePool> pools,
                                const QuerySet& queries, const Corpus& corpus,
                                const RerankTrainConfig& cfg, RerankTrainStats* stats) {
  cfg.validate();
  model.validate();
  if (stats) *stats = RerankTrainStats{};
  const auto opt_cfg = cfg.optimizer_config();
  RowOptimizer<float> embed_opt(opt_cfg, model.embed.size());
  RowOptimizer<float> w1_opt(opt_cfg, model.w1.size());
  RowOptimizer<float> b1_opt(opt_cfg, model.b1.size());
  RowOptimizer<float> w2_opt(opt_cfg, model.w2.size());
  RowOptimizer<float> b2_opt(opt_cfg, 1);

  auto noisy = [&](TokenSeq tokens, bool enabled, std::uint64_t seed) {
    if (!enabled || cfg.noise.rate == 0.0) return tokens;
    NoiseConfig nc = cfg.noise;
    nc.seed = seed;
    return corrupt(std::move(tokens), nc);
  };

  std::vector<bool> counted_skip(pools.size(), false);
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::mt19937_64 rng(derive_seed(cfg.seed, 0x4e4e, epoch));
    std::vector<std::size_t> order(pools.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng);

    RerankGrad batch_grad;
    init_grad(model, batch_grad);
    std::size_t in_batch = 0;
    double epoch_total = 0.0;
    std::size_t epoch_steps = 0;
    double batch_loss = 0.0;

    auto step = [&] {
      if (in_batch == 0) return;
      scale_grad(batch_grad, 1.0 / static_cast<double>(in_batch));
      for (auto* opt : {&embed_opt, &w1_opt, &b1_opt, &w2_opt, &b2_opt}) opt->next_step();
      embed_opt.update_rows(model.embed, model.dim, batch_grad.embed);
      w1_opt.update(model.w1, 0, batch_grad.w1);
      b1_opt.update(model.b1, 0, batch_grad.b1);
      w2_opt.update(model.w2, 0, batch_grad.w2);
      std::span<float> b2(&model.b2, 1);
      const double gb2[1] = {batch_grad.b2};
      b2_opt.update(b2, 0, gb2);
      epoch_total += batch_loss / static_cast<double>(in_batch);
      ++epoch_steps;
      if (stats) ++stats->steps;
      batch_grad = RerankGrad{};
      init_grad(model, batch_grad);
      in_batch = 0;
      batch_loss = 0.0;
    };

    for (auto item : order) {
      const auto& pool = pools[item];
      const auto query_seed = derive_seed(cfg.seed, queries[pool.query].id);
      auto labels = sample_soft_labels(pool, queries, corpus, cfg, derive_seed(query_seed, epoch, 7));
      if (!labels) {
        if (stats && !counted_skip[item]) ++stats->skipped_queries;
        counted_skip[item] = true;
        continue;
      }
      auto q = noisy(tokenize(queries[pool.query].text), cfg.noise_queries,
                     derive_seed(query_seed, epoch, 1));
      std::vector<TokenSeq> passages;
      for (std::size_t i = 0; i < labels->passage_ids.size(); ++i) {
        auto ordinal = corpus.ordinal(labels->passage_ids[i]);
        passages.push_back(noisy(tokenize(corpus.indexed_text(ordinal, cfg.include_title)),
                                 cfg.noise_passages, derive_seed(query_seed, epoch, 100 + i)));
      }
      RerankLoss loss;
      if (cfg.objective == RerankObjective::Kl) {
        loss = kl_loss(model, q, std::span<const TokenSeq>(passages), labels->teacher_probs,
                       cfg.kl_direction);
      } else {
        loss = ce_loss(model, q, passages[0], std::span<const TokenSeq>(passages).subspan(1));
      }
      add_grad(batch_grad, loss.grad);
      batch_loss += loss.loss;
      if (++in_batch == cfg.batch_size) step();
    }
    step();
    if (stats) {
      stats->epoch_loss.push_back(epoch_steps ? epoch_total / static_cast<double>(epoch_steps) : 0.0);
    }
  }
  return model;
}

RerankModel train_reranker(std::span<const CandidatePool> pools, const QuerySet& queries,
                           const Corpus& corpus, const RerankTrainConfig& cfg,
                           RerankTrainStats* stats) {
  return train_reranker_from(cfg.fresh_model(), pools, queries, corpus, cfg, stats);
}

RerankModel train_reranker(const DenseModel& retriever, const QuerySet& queries,
                           const Corpus& corpus, const RerankTrainConfig& cfg,
                           std::size_t positives, std::size_t threads, RerankTrainStats* stats) {
  if (retriever.dim != cfg.dim) {
    throw ConfigError("reranker dim " + std::to_string(cfg.dim) + " differs from retriever dim " +
                      std::to_string(retriever.dim));
  }
  auto matrix = encode_corpus(retriever, corpus, threads, cfg.include_title);
  auto pools = build_candidate_pools(retriever, matrix, queries, cfg.pool_last_rank, positives, threads);
  return train_reranker(pools, queries, corpus, cfg, stats);
}

// ---- Checkpoints -----------------------------------------------------------

// Layout: "ABRR1" u32 version u32 buckets u32 dim u32 hidden u64 seed
//         f32 embed[buckets*dim] f32 w1[hidden*(3*dim+2)] f32 b1[hidden] f32 w2[hidden] f32 b2
//         u64 fnv1a64 of all parameter bytes in that order
namespace {
std::uint64_t payload_hash(const RerankModel& m) {
  std::uint64_t h = fnv1a64("ABRR1");
  h = hash_bytes(m.embed, h);
  h = hash_bytes(m.w1, h);
  h = hash_bytes(m.b1, h);
  h = hash_bytes(m.w2, h);
  return hash_value<float>(m.b2, h);
}
}  // namespace

void write_checkpoint(const RerankModel& model, std::ostream& out) {
  model.validate();
  out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
  binio::write<std::uint32_t>(out, kVersion);
  binio::write<std::uint32_t>(out, model.buckets);
  binio::write<std::uint32_t>(out, model.dim);
  binio::write<std::uint32_t>(out, model.hidden);
  binio::write<std::uint64_t>(out, model.seed);
  binio::write_array(out, model.embed);
  binio::write_array(out, model.w1);
  binio::write_array(out, model.b1);
  binio::write_array(out, model.w2);
  binio::write<float>(out, model.b2);
  binio::write<std::uint64_t>(out, payload_hash(model));
}

RerankModel read_rerank_checkpoint(std::istream& in) {
  constexpr std::string_view what = "reranker checkpoint";
  binio::expect_magic(in, kMagic, what);
  if (auto v = binio::read<std::uint32_t>(in, what); v != kVersion) {
    throw DataError("reranker checkpoint: unsupported version " + std::to_string(v));
  }
  RerankModel m;
  m.buckets = binio::read<std::uint32_t>(in, what);
  m.dim = binio::read<std::uint32_t>(in, what);
  m.hidden = binio::read<std::uint32_t>(in, what);
  m.seed = binio::read<std::uint64_t>(in, what);
  m.embed = binio::read_array<float>(in, static_cast<std::size_t>(m.buckets) * m.dim, what);
  m.w1 = binio::read_array<float>(in, static_cast<std::size_t>(m.hidden) * m.features(), what);
  m.b1 = binio::read_array<float>(in, m.hidden, what);
  m.w2 = binio::read_array<float>(in, m.hidden, what);
  m.b2 = binio::read<float>(in, what);
  if (binio::read<std::uint64_t>(in, what) != payload_hash(m)) {
    throw DataError("reranker checkpoint: checksum mismatch");
  }
  binio::expect_end(in, what);
  m.validate();
  return m;
}

void save_checkpoint(const RerankModel& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  write_checkpoint(model, out);
}

RerankModel load_rerank_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read_rerank_checkpoint(in);
}

}  // namespace altboot
