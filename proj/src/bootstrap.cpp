#include "altboot/bootstrap.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>

#include <json.hpp>

#include "altboot/error.hpp"
#include "altboot/metrics.hpp"
#include "altboot/parallel.hpp"

namespace altboot {

namespace {

std::string hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

std::filesystem::path artifact(const BootstrapConfig& cfg, std::size_t t, const char* suffix) {
  return cfg.artifacts_dir / ("iter" + std::to_string(t) + "." + suffix);
}

std::vector<TrainingExample> extract_all(std::span<const RankedList> lists, const ExtractionRule& rule) {
  std::vector<TrainingExample> out;
  out.reserve(lists.size());
  for (const auto& l : lists) out.push_back(extract_labels(l, rule));
  return out;
}

std::size_t count_usable(std::span<const TrainingExample> examples) {
  return static_cast<std::size_t>(
      std::count_if(examples.begin(), examples.end(), [](const auto& e) { return e.usable(); }));
}

void record_metrics(IterationRecord& rec, const DenseModel& retriever, const PassageMatrix& matrix,
                    const Corpus& corpus, const Validation* validation, std::size_t threads) {
  if (validation && validation->queries && validation->qrels) {
    rec.retriever_metric = evaluate_retriever(retriever, matrix, corpus, *validation, threads);
  }
}

}  // namespace

// ---- Extraction ------------------------------------------------------------

void ExtractionRule::validate() const {
  if (k < 1 || k_pos < 1 || k_neg < 1) throw ConfigError("extraction: k, k_pos, k_neg must be >= 1");
  if (k_pos + k_neg > k) throw ConfigError("extraction: k_pos + k_neg must not exceed k");
}

ExtractionRanks extraction_ranks(std::size_t n, const ExtractionRule& rule) {
  rule.validate();
  ExtractionRanks r{1, std::min(rule.k_pos, n), 1, 0};
  if (n >= rule.k) {
    r.neg_first = rule.k - rule.k_neg + 1;
    r.neg_last = rule.k;
  } else {
    const std::size_t count = std::min(rule.k_neg, n - r.pos_last);
    r.neg_first = n - count + 1;
    r.neg_last = n;
  }
  return r;
}

TrainingExample extract_labels(const RankedList& ranked, const ExtractionRule& rule) {
  auto r = extraction_ranks(ranked.size(), rule);
  TrainingExample ex;
  ex.query_id = ranked.query_id;
  for (std::size_t rank = r.pos_first; rank <= r.pos_last; ++rank) {
    ex.positives.push_back(ranked.entries[rank - 1].passage_id);
  }
  for (std::size_t rank = r.neg_first; rank <= r.neg_last; ++rank) {
    ex.negatives.push_back(ranked.entries[rank - 1].passage_id);
  }
  return ex;
}

// ---- Configuration ---------------------------------------------------------

void BootstrapConfig::validate() const {
  rule.validate();
  retriever.validate();
  reranker.validate();
  bm25.validate();
  if (buckets == 0 || dim == 0) throw ConfigError("bootstrap: buckets and dim must be >= 1");
  if (reranker.dim != dim) throw ConfigError("bootstrap: reranker dim must equal retriever dim");
  if (retrieve_k < rule.k) throw ConfigError("bootstrap: retrieve_k must be >= extraction k");
  if (rerank_depth < 1) throw ConfigError("bootstrap: rerank_depth must be >= 1");
}

TrainConfig BootstrapConfig::retriever_config(std::size_t iteration) const {
  TrainConfig c = retriever;
  c.seed = derive_seed(seed, 0xD0, iteration);
  c.include_title = include_title;
  return c;
}

RerankTrainConfig BootstrapConfig::reranker_config(std::size_t iteration) const {
  RerankTrainConfig c = reranker;
  c.init_seed = derive_seed(seed, 0xF1);
  c.seed = derive_seed(seed, 0xF2, iteration);
  c.buckets = buckets;
  c.dim = dim;
  c.include_title = include_title;
  return c;
}

DenseModel BootstrapConfig::fresh_retriever() const {
  return DenseModel::initialize(buckets, dim, derive_seed(seed, 0xD1), init_sigma);
}

// ---- Evaluation helpers ----------------------------------------------------

Run dense_run(const DenseModel& model, const PassageMatrix& matrix, const Corpus& corpus,
              const QuerySet& queries, std::size_t k, std::size_t threads) {
  std::vector<RankedList> lists(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    auto hits = dense_search(model, matrix, queries[i].text, k);
    lists[i] = to_ranked_list(queries[i].id, hits, corpus);
  });
  Run run;
  for (auto& l : lists) run.emplace(l.query_id, std::move(l));
  return run;
}

double evaluate_retriever(const DenseModel& model, const PassageMatrix& matrix, const Corpus& corpus,
                          const Validation& validation, std::size_t threads) {
  auto run = dense_run(model, matrix, corpus, *validation.queries, validation.k, threads);
  return ndcg_at_k(run, *validation.qrels, validation.k).mean;
}

double evaluate_reranker(const RerankModel& reranker, const DenseModel& retriever,
                         const PassageMatrix& matrix, const Corpus& corpus,
                         const Validation& validation, std::size_t retrieve_k,
                         std::size_t rerank_depth, std::size_t threads, bool include_title) {
  const auto& queries = *validation.queries;
  auto base = dense_run(retriever, matrix, corpus, queries, retrieve_k, threads);
  std::vector<RankedList> lists(queries.size());
  parallel_for(queries.size(), threads, [&](std::size_t i) {
    lists[i] = rerank(reranker, queries[i].text, base.at(queries[i].id), rerank_depth, corpus,
                      include_title);
  });
  Run run;
  for (auto& l : lists) run.emplace(l.query_id, std::move(l));
  return ndcg_at_k(run, *validation.qrels, validation.k).mean;
}

// ---- Loop ------------------------------------------------------------------

BootstrapState warmup(const Corpus& corpus, const QuerySet& queries, const BootstrapConfig& cfg,
                      const Validation* validation) {
  cfg.validate();
  if (queries.empty()) throw DataError("no training queries");
  auto index = Bm25Index::build(corpus, cfg.bm25, cfg.include_title);

  std::vector<RankedList> lists(queries.size());
  parallel_for(queries.size(), cfg.threads, [&](std::size_t i) {
    lists[i] = index.search(queries[i].text, cfg.rule.k, queries[i].id);
  });
  auto examples = extract_all(lists, cfg.rule);
  if (count_usable(examples) == 0) {
    throw RuntimeFailure("warm-up: BM25 produced no usable training example");
  }

  BootstrapState state;
  auto init = cfg.fresh_retriever();
  IterationRecord rec;
  rec.t = 0;
  rec.retriever_init_checksum = init.checksum();
  TrainStats stats;
  state.warmup = train_retriever(std::move(init), examples, queries, corpus, cfg.retriever_config(0), &stats);
  state.retriever = state.warmup;
  rec.retriever_checksum = state.warmup.checksum();
  rec.examples = examples.size() - stats.skipped_examples;
  rec.skipped_examples = stats.skipped_examples;
  auto matrix = encode_corpus(state.warmup, corpus, cfg.threads, cfg.include_title);
  record_metrics(rec, state.warmup, matrix, corpus, validation, cfg.threads);
  state.trace.push_back(rec);
  state.retrievers.push_back(state.warmup);
  state.rerankers.emplace_back();

  if (!cfg.artifacts_dir.empty()) {
    std::filesystem::create_directories(cfg.artifacts_dir);
    save_checkpoint(state.warmup, artifact(cfg, 0, "retriever.ckpt"));
    write_labels(examples, artifact(cfg, 0, "labels.jsonl"));
    write_trace(state, cfg.artifacts_dir / "trace.json");
  }
  return state;
}

BootstrapState iterate(BootstrapState state, std::size_t T, const Corpus& corpus,
                       const QuerySet& queries, const BootstrapConfig& cfg,
                       const Validation* validation) {
  cfg.validate();
  if (queries.empty()) throw DataError("no training queries");
  for (std::size_t t = state.t + 1; t <= T; ++t) {
    IterationRecord rec;
    rec.t = t;
    const DenseModel& previous = state.retriever;
    auto matrix = encode_corpus(previous, corpus, cfg.threads, cfg.include_title);
    auto pools = build_candidate_pools(previous, matrix, queries, cfg.retrieve_k, cfg.rule.k_pos, cfg.threads);

    // Step 2: reranker distilled from the previous retriever's soft labels.
    std::vector<RankedList> refined(queries.size());
    if (!cfg.self_supervision) {
      auto rcfg = cfg.reranker_config(t);
      RerankModel start = cfg.warm_start_reranker && state.reranker ? *state.reranker : rcfg.fresh_model();
      rec.reranker_init_checksum = start.checksum();
      auto reranker = train_reranker_from(std::move(start), pools, queries, corpus, rcfg);
      rec.reranker_checksum = reranker.checksum();

      // Step 3a: rerank each list and extract refined labels.
      parallel_for(queries.size(), cfg.threads, [&](std::size_t i) {
        auto list = to_ranked_list(queries[i].id, pools[i].hits, corpus);
        refined[i] = rerank(reranker, queries[i].text, list, cfg.rerank_depth, corpus, cfg.include_title);
      });
      if (validation && validation->queries && validation->qrels) {
        rec.reranker_metric = evaluate_reranker(reranker, previous, matrix, corpus, *validation,
                                                cfg.retrieve_k, cfg.rerank_depth, cfg.threads,
                                                cfg.include_title);
      }
      state.reranker = std::move(reranker);
    } else {
      for (std::size_t i = 0; i < queries.size(); ++i) {
        refined[i] = to_ranked_list(queries[i].id, pools[i].hits, corpus);
      }
    }
    auto examples = extract_all(refined, cfg.rule);
    if (count_usable(examples) == 0) {
      throw RuntimeFailure("iteration " + std::to_string(t) + ": no usable training example");
    }

    // Step 3b: refine the warm-up retriever on the new labels.
    DenseModel start = cfg.warm_start_retriever ? state.retriever : state.warmup;
    rec.retriever_init_checksum = start.checksum();
    TrainStats stats;
    state.retriever = train_retriever(std::move(start), examples, queries, corpus, cfg.retriever_config(t), &stats);
    rec.retriever_checksum = state.retriever.checksum();
    rec.examples = examples.size() - stats.skipped_examples;
    rec.skipped_examples = stats.skipped_examples;
    auto new_matrix = encode_corpus(state.retriever, corpus, cfg.threads, cfg.include_title);
    record_metrics(rec, state.retriever, new_matrix, corpus, validation, cfg.threads);

    state.t = t;
    state.trace.push_back(rec);
    state.retrievers.push_back(state.retriever);
    state.rerankers.push_back(cfg.self_supervision ? std::nullopt : state.reranker);

    if (!cfg.artifacts_dir.empty()) {
      std::filesystem::create_directories(cfg.artifacts_dir);
      save_checkpoint(state.retriever, artifact(cfg, t, "retriever.ckpt"));
      if (!cfg.self_supervision) save_checkpoint(*state.reranker, artifact(cfg, t, "reranker.ckpt"));
      write_labels(examples, artifact(cfg, t, "labels.jsonl"));
      write_trace(state, cfg.artifacts_dir / "trace.json");
    }
  }
  return state;
}

std::optional<std::size_t> best_iteration(std::span<const std::optional<double>> metrics) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < metrics.size(); ++i) {
    if (!metrics[i]) continue;
    if (!best || *metrics[i] > *metrics[*best]) best = i;
  }
  return best;
}

FinalSelection select_final(const BootstrapState& state) {
  if (state.t < 1) throw RuntimeFailure("select_final: no bootstrapping iteration has run");
  std::vector<std::optional<double>> retriever_metrics, reranker_metrics;
  for (const auto& rec : state.trace) {
    retriever_metrics.push_back(rec.retriever_metric);
    reranker_metrics.push_back(rec.reranker_metric);
  }
  auto r = best_iteration(retriever_metrics);
  auto rr = best_iteration(reranker_metrics);
  if (!r || !rr) throw RuntimeFailure("select_final: no validation metrics recorded");
  return FinalSelection{*r, *rr, state.retrievers.at(*r), *state.rerankers.at(*rr)};
}

// ---- Artifacts -------------------------------------------------------------

std::string trace_json(const BootstrapState& state) {
  nlohmann::ordered_json j;
  j["iterations"] = nlohmann::ordered_json::array();
  std::vector<std::optional<double>> rm, rrm;
  for (const auto& rec : state.trace) {
    nlohmann::ordered_json it;
    it["t"] = rec.t;
    it["retriever_ndcg@10"] = rec.retriever_metric ? nlohmann::ordered_json(*rec.retriever_metric) : nullptr;
    it["reranker_ndcg@10"] = rec.reranker_metric ? nlohmann::ordered_json(*rec.reranker_metric) : nullptr;
    it["retriever_init_checksum"] = hex(rec.retriever_init_checksum);
    it["retriever_checksum"] = hex(rec.retriever_checksum);
    it["reranker_init_checksum"] = rec.reranker_init_checksum ? nlohmann::ordered_json(hex(*rec.reranker_init_checksum)) : nullptr;
    it["reranker_checksum"] = rec.reranker_checksum ? nlohmann::ordered_json(hex(*rec.reranker_checksum)) : nullptr;
    it["examples"] = rec.examples;
    it["skipped_examples"] = rec.skipped_examples;
    j["iterations"].push_back(it);
    rm.push_back(rec.retriever_metric);
    rrm.push_back(rec.reranker_metric);
  }
  auto r = best_iteration(rm);
  auto rr = best_iteration(rrm);
  j["best_retriever_iteration"] = r ? nlohmann::ordered_json(*r) : nullptr;
  j["best_reranker_iteration"] = rr ? nlohmann::ordered_json(*rr) : nullptr;
  return j.dump(2) + "\n";
}

void write_trace(const BootstrapState& state, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  out << trace_json(state);
}

BootstrapState load_state(const std::filesystem::path& dir) {
  const auto trace_path = dir / "trace.json";
  std::ifstream in(trace_path);
  if (!in) throw DataError("no bootstrap state in " + dir.string() + " (run warmup first)");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw DataError("trace.json: " + std::string(e.what()));
  }
  auto checksum = [](const nlohmann::json& v) -> std::optional<std::uint64_t> {
    if (v.is_null()) return std::nullopt;
    return std::stoull(v.get<std::string>(), nullptr, 16);
  };
  auto metric = [](const nlohmann::json& v) -> std::optional<double> {
    if (v.is_null()) return std::nullopt;
    return v.get<double>();
  };
  BootstrapState state;
  try {
    for (const auto& it : j.at("iterations")) {
      IterationRecord rec;
      rec.t = it.at("t").get<std::size_t>();
      if (rec.t != state.trace.size()) throw DataError("trace.json: iterations out of order");
      rec.retriever_metric = metric(it.at("retriever_ndcg@10"));
      rec.reranker_metric = metric(it.at("reranker_ndcg@10"));
      rec.retriever_init_checksum = *checksum(it.at("retriever_init_checksum"));
      rec.retriever_checksum = *checksum(it.at("retriever_checksum"));
      rec.reranker_init_checksum = checksum(it.at("reranker_init_checksum"));
      rec.reranker_checksum = checksum(it.at("reranker_checksum"));
      rec.examples = it.at("examples").get<std::size_t>();
      rec.skipped_examples = it.at("skipped_examples").get<std::size_t>();

      auto retriever = load_dense_checkpoint(dir / ("iter" + std::to_string(rec.t) + ".retriever.ckpt"));
      if (retriever.checksum() != rec.retriever_checksum) {
        throw DataError("iteration " + std::to_string(rec.t) + ": retriever checkpoint does not match trace");
      }
      std::optional<RerankModel> reranker;
      if (rec.reranker_checksum) {
        reranker = load_rerank_checkpoint(dir / ("iter" + std::to_string(rec.t) + ".reranker.ckpt"));
        if (reranker->checksum() != *rec.reranker_checksum) {
          throw DataError("iteration " + std::to_string(rec.t) + ": reranker checkpoint does not match trace");
        }
        state.reranker = reranker;
      }
      state.retrievers.push_back(std::move(retriever));
      state.rerankers.push_back(std::move(reranker));
      state.trace.push_back(rec);
    }
  } catch (const nlohmann::json::exception& e) {
    throw DataError("trace.json: " + std::string(e.what()));
  } catch (const std::invalid_argument&) {
    throw DataError("trace.json: bad checksum field");
  }
  if (state.trace.empty()) throw DataError("trace.json: no iterations recorded");
  state.t = state.trace.back().t;
  state.warmup = state.retrievers.front();
  state.retriever = state.retrievers.back();
  return state;
}

void write_labels(std::span<const TrainingExample> examples, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  for (const auto& ex : examples) {
    nlohmann::ordered_json j;
    j["query_id"] = ex.query_id;
    j["positives"] = ex.positives;
    j["negatives"] = ex.negatives;
    out << j.dump() << '\n';
  }
}

std::vector<TrainingExample> read_labels(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  std::vector<TrainingExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      auto j = nlohmann::json::parse(line);
      out.push_back(TrainingExample{j.at("query_id").get<std::string>(),
                                    j.at("positives").get<std::vector<std::string>>(),
                                    j.at("negatives").get<std::vector<std::string>>()});
    } catch (const nlohmann::json::exception& e) {
      throw DataError("labels: bad line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace altboot
