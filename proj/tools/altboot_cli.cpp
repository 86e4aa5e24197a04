// altboot: command-line driver for the bootstrapping pipeline.
//
// Every subcommand prints one JSON summary line on stdout. Failures print a
// JSON object on stderr and exit with 2 (configuration), 3 (data) or
// 4 (runtime).

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "altboot/bm25.hpp"
#include "altboot/bootstrap.hpp"
#include "altboot/corpus.hpp"
#include "altboot/dense.hpp"
#include "altboot/error.hpp"
#include "altboot/metrics.hpp"
#include "altboot/rerank.hpp"
#include "altboot/synthetic.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;
using namespace altboot;

namespace {

std::string hex(std::uint64_t v) {
  char buf[19];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

void emit(const json& summary) { std::cout << summary.dump() << std::endl; }

void require_file(const std::string& path, const char* what) {
  if (!fs::is_regular_file(path)) throw DataError(std::string(what) + " not found: " + path);
}

// ---- Option groups ---------------------------------------------------------

struct Common {
  std::size_t threads = 1;
};

void add_threads(CLI::App* app, Common& c) {
  app->add_option("--threads", c.threads, "Worker threads; results do not depend on it")
      ->check(CLI::PositiveNumber);
}

void add_retriever_training(CLI::App* app, TrainConfig& t, const std::string& prefix = "retriever-") {
  const std::string group = "Retriever training";
  app->add_option("--" + prefix + "epochs", t.epochs, "Training epochs")->group(group);
  app->add_option("--" + prefix + "batch-size", t.batch_size, "Triples per step")->group(group);
  app->add_option("--" + prefix + "lr", t.learning_rate, "Learning rate")->group(group);
  app->add_option("--" + prefix + "temperature", t.temperature, "Contrastive temperature")->group(group);
  app->add_option("--" + prefix + "noise", t.noise.rate, "Shuffle/delete/mask rate")->group(group);
  app->add_option("--" + prefix + "noise-queries", t.noise_queries, "Corrupt queries during training")->group(group);
  app->add_option("--" + prefix + "noise-passages", t.noise_passages, "Corrupt passages during training")->group(group);
  app->add_option("--" + prefix + "optimizer", t.optimizer, "sgd or adam")
      ->transform(CLI::CheckedTransformer(std::map<std::string, OptimizerKind>{
          {"sgd", OptimizerKind::Sgd}, {"adam", OptimizerKind::Adam}}))
      ->group(group);
}

void add_reranker_training(CLI::App* app, RerankTrainConfig& r) {
  const std::string group = "Reranker training";
  app->add_option("--reranker-hidden", r.hidden, "Hidden width")->group(group);
  app->add_option("--reranker-embed-sigma", r.embed_sigma, "Embedding init std-dev")->group(group);
  app->add_option("--reranker-epochs", r.epochs, "Training epochs")->group(group);
  app->add_option("--reranker-batch-size", r.batch_size, "Queries per step")->group(group);
  app->add_option("--reranker-negatives", r.negatives, "Negatives per sampled candidate set")->group(group);
  app->add_option("--reranker-pool-first", r.pool_first_rank, "First rank of the negative pool")->group(group);
  app->add_option("--reranker-pool-last", r.pool_last_rank, "Last rank of the negative pool")->group(group);
  app->add_option("--reranker-lr", r.learning_rate, "Learning rate")->group(group);
  app->add_option("--teacher-temperature", r.teacher_temperature, "Soft-label temperature")->group(group);
  app->add_option("--reranker-noise", r.noise.rate, "Shuffle/delete/mask rate")->group(group);
  app->add_option("--reranker-objective", r.objective, "kl or ce")
      ->transform(CLI::CheckedTransformer(std::map<std::string, RerankObjective>{
          {"kl", RerankObjective::Kl}, {"ce", RerankObjective::Ce}}))
      ->group(group);
  app->add_option("--kl-direction", r.kl_direction, "student_teacher or teacher_student")
      ->transform(CLI::CheckedTransformer(std::map<std::string, KlDirection>{
          {"student_teacher", KlDirection::StudentTeacher},
          {"teacher_student", KlDirection::TeacherStudent}}))
      ->group(group);
}

struct LoopOptions {
  std::string corpus;
  std::string queries;
  std::size_t crop_cap = 2'000'000;
  std::string validation_queries;
  std::string qrels;
  std::string workdir;
  BootstrapConfig cfg;
  bool no_title = false;
  Common common;
};

void add_loop_options(CLI::App* app, LoopOptions& o) {
  app->add_option("--corpus", o.corpus, "Corpus JSONL")->required();
  app->add_option("--queries", o.queries,
                  "Training queries JSONL; when absent, sentences are cropped from the corpus");
  app->add_option("--crop-cap", o.crop_cap, "Maximum cropped queries");
  app->add_option("--validation-queries", o.validation_queries, "Held-out queries JSONL");
  app->add_option("--qrels", o.qrels, "Qrels TSV for the held-out queries");
  app->add_option("--workdir", o.workdir, "Artifact directory")->required();
  app->add_option("--seed", o.cfg.seed, "Master seed")->required();
  app->add_option("--buckets", o.cfg.buckets, "Hash buckets");
  app->add_option("--dim", o.cfg.dim, "Embedding width (retriever and reranker)");
  app->add_option("--init-sigma", o.cfg.init_sigma, "Retriever init std-dev");
  app->add_option("--k", o.cfg.rule.k, "Extraction window")->group("Extraction");
  app->add_option("--k-pos", o.cfg.rule.k_pos, "Positives per query")->group("Extraction");
  app->add_option("--k-neg", o.cfg.rule.k_neg, "Hard negatives per query")->group("Extraction");
  app->add_option("--retrieve-k", o.cfg.retrieve_k, "Retriever depth per iteration");
  app->add_option("--rerank-depth", o.cfg.rerank_depth, "Reranked prefix length");
  app->add_option("--bm25-k1", o.cfg.bm25.k1, "BM25 k1");
  app->add_option("--bm25-b", o.cfg.bm25.b, "BM25 b");
  app->add_flag("--self-supervision", o.cfg.self_supervision,
                "Extract refined labels from the retriever itself (ablation)");
  app->add_flag("--warm-start-retriever", o.cfg.warm_start_retriever,
                "Refine from the previous retriever instead of the warm-up (ablation)");
  app->add_flag("--warm-start-reranker", o.cfg.warm_start_reranker,
                "Continue the previous reranker instead of a fresh init (ablation)");
  app->add_flag("--no-title", o.no_title, "Index passage text without titles");
  add_retriever_training(app, o.cfg.retriever);
  add_reranker_training(app, o.cfg.reranker);
  add_threads(app, o.common);
}

struct LoopInputs {
  Corpus corpus;
  QuerySet queries;
  QuerySet validation_queries;
  Qrels qrels;
  bool has_validation = false;
};

LoopInputs load_loop_inputs(LoopOptions& o) {
  require_file(o.corpus, "corpus");
  LoopInputs in;
  in.corpus = load_corpus(o.corpus);
  if (!o.queries.empty()) {
    require_file(o.queries, "queries");
    in.queries = load_queries(o.queries);
  } else {
    in.queries = crop_queries(in.corpus, {.cap = o.crop_cap, .seed = derive_seed(o.cfg.seed, "crop")});
  }
  if (o.validation_queries.empty() != o.qrels.empty()) {
    throw ConfigError("--validation-queries and --qrels must be given together");
  }
  if (!o.qrels.empty()) {
    require_file(o.validation_queries, "validation queries");
    require_file(o.qrels, "qrels");
    in.validation_queries = load_queries(o.validation_queries);
    in.qrels = load_qrels(o.qrels);
    in.has_validation = true;
  }
  o.cfg.include_title = !o.no_title;
  o.cfg.threads = o.common.threads;
  o.cfg.reranker.dim = o.cfg.dim;
  o.cfg.reranker.buckets = o.cfg.buckets;
  o.cfg.artifacts_dir = o.workdir;
  return in;
}

json trace_summary(const BootstrapState& state) {
  json out = json::array();
  for (const auto& rec : state.trace) {
    json it;
    it["t"] = rec.t;
    it["retriever_ndcg@10"] = rec.retriever_metric ? json(*rec.retriever_metric) : json(nullptr);
    it["reranker_ndcg@10"] = rec.reranker_metric ? json(*rec.reranker_metric) : json(nullptr);
    out.push_back(it);
  }
  return out;
}

// ---- Config file -----------------------------------------------------------

// Turns a JSON config into "--key=value" arguments for the chosen subcommand.
// Top-level scalars apply to every subcommand that has the option; an object
// named after a subcommand applies to that subcommand only. Flags given on
// the command line win.
std::vector<std::string> config_arguments(const std::string& path, CLI::App& root, CLI::App* sub,
                                          const std::set<std::string>& given) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config " + path);
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path + ": " + e.what());
  }
  if (!j.is_object()) throw ConfigError("config " + path + ": expected a JSON object");

  std::vector<std::string> args;
  auto scalar = [](const json& v) -> std::string {
    if (v.is_string()) return v.get<std::string>();
    if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
    if (v.is_number()) return v.dump();
    throw ConfigError("config values must be strings, numbers, booleans or arrays of those");
  };
  auto apply = [&](const std::string& key, const json& v, bool strict) {
    if (key == "config") throw ConfigError("config files cannot nest --config");
    auto* opt = sub->get_option_no_throw("--" + key);
    if (!opt) {
      if (strict) throw ConfigError("config: subcommand " + sub->get_name() + " has no option --" + key);
      return;
    }
    if (given.count(key)) return;
    if (v.is_array()) {
      for (const auto& e : v) args.push_back("--" + key + "=" + scalar(e));
    } else {
      args.push_back("--" + key + "=" + scalar(v));
    }
  };
  for (const auto& [key, v] : j.items()) {
    if (auto* other = root.get_subcommand_no_throw(key); other && v.is_object()) {
      if (other != sub) continue;
      for (const auto& [k2, v2] : v.items()) apply(k2, v2, true);
      continue;
    }
    bool known = false;
    for (auto* s : root.get_subcommands([](CLI::App*) { return true; })) {
      known = known || s->get_option_no_throw("--" + key) != nullptr;
    }
    if (!known) throw ConfigError("config: unknown key \"" + key + "\"");
    apply(key, v, false);
  }
  return args;
}

int exit_code_of(const std::exception& e) {
  if (dynamic_cast<const ConfigError*>(&e)) return 2;
  if (dynamic_cast<const DataError*>(&e)) return 3;
  return 4;
}

void report_error(const std::string& kind, const std::string& message, int code) {
  json err;
  err["error"] = kind;
  err["message"] = message;
  err["exit_code"] = code;
  std::cerr << err.dump() << std::endl;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Alternating retriever/reranker bootstrapping for zero-shot dense retrieval", "altboot"};
  app.require_subcommand(1);
  app.option_defaults()->always_capture_default()->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
  app.set_version_flag("--version", "altboot 0.1.0");
  std::string config_path;
  app.add_option("--config", config_path, "JSON config; command-line flags override it");

  std::function<void()> action;

  // ingest -------------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "Validate corpus/queries/qrels and copy them into a workdir");
  struct {
    std::string corpus, queries, qrels, workdir;
    bool check = false;
  } ig;
  ingest->add_option("--corpus", ig.corpus, "Corpus JSONL")->required();
  ingest->add_option("--queries", ig.queries, "Queries JSONL");
  ingest->add_option("--qrels", ig.qrels, "Qrels TSV");
  ingest->add_option("--workdir", ig.workdir, "Output directory")->required();
  ingest->add_flag("--check-qrels", ig.check, "Fail when qrels reference unknown ids");
  ingest->callback([&] {
    action = [&] {
      require_file(ig.corpus, "corpus");
      auto corpus = load_corpus(ig.corpus);
      fs::create_directories(ig.workdir);
      save_corpus(corpus, fs::path(ig.workdir) / "corpus.jsonl");
      json s;
      s["command"] = "ingest";
      s["passages"] = corpus.size();
      s["corpus_checksum"] = hex(corpus.checksum());
      QuerySet queries;
      if (!ig.queries.empty()) {
        require_file(ig.queries, "queries");
        queries = load_queries(ig.queries);
        save_queries(queries, fs::path(ig.workdir) / "queries.jsonl");
        s["queries"] = queries.size();
      }
      if (!ig.qrels.empty()) {
        require_file(ig.qrels, "qrels");
        auto qrels = load_qrels(ig.qrels);
        save_qrels(qrels, fs::path(ig.workdir) / "qrels.tsv");
        s["qrels_queries"] = qrels.size();
        auto problems = check_qrels(qrels, queries, corpus);
        if (ig.check && !problems.empty()) throw DataError("qrels: " + problems.front());
        s["qrels_problems"] = problems.size();
      }
      emit(s);
    };
  });

  // crop-queries -------------------------------------------------------------
  auto* crop = app.add_subcommand("crop-queries", "Turn corpus sentences into pseudo-queries");
  struct {
    std::string corpus, out;
    CropOptions opt;
  } cq;
  crop->add_option("--corpus", cq.corpus, "Corpus JSONL")->required();
  crop->add_option("--out", cq.out, "Output queries JSONL")->required();
  crop->add_option("--cap", cq.opt.cap, "Maximum number of queries")->check(CLI::PositiveNumber);
  crop->add_option("--seed", cq.opt.seed, "Sampling seed")->required();
  crop->add_option("--min-tokens", cq.opt.min_tokens, "Drop sentences shorter than this");
  crop->callback([&] {
    action = [&] {
      require_file(cq.corpus, "corpus");
      auto queries = crop_queries(load_corpus(cq.corpus), cq.opt);
      save_queries(queries, cq.out);
      emit({{"command", "crop-queries"}, {"queries", queries.size()}, {"out", cq.out}});
    };
  });

  // bm25-index ---------------------------------------------------------------
  auto* bm = app.add_subcommand("bm25-index", "Build a BM25 index, optionally writing a run");
  struct {
    std::string corpus, out, queries, run;
    Bm25Params params;
    std::size_t k = 100;
    bool no_title = false;
    Common common;
  } bi;
  bm->add_option("--corpus", bi.corpus, "Corpus JSONL")->required();
  bm->add_option("--out", bi.out, "Index file")->required();
  bm->add_option("--k1", bi.params.k1, "BM25 k1");
  bm->add_option("--b", bi.params.b, "BM25 b");
  bm->add_flag("--no-title", bi.no_title, "Index passage text without titles");
  bm->add_option("--queries", bi.queries, "Queries to search (requires --run)");
  bm->add_option("--run", bi.run, "TREC run output");
  bm->add_option("--top-k", bi.k, "Run depth")->check(CLI::PositiveNumber);
  add_threads(bm, bi.common);
  bm->callback([&] {
    action = [&] {
      require_file(bi.corpus, "corpus");
      if (bi.queries.empty() != bi.run.empty()) throw ConfigError("--queries and --run go together");
      bi.params.validate();
      auto corpus = load_corpus(bi.corpus);
      auto index = Bm25Index::build(corpus, bi.params, !bi.no_title);
      index.save(bi.out);
      json s{{"command", "bm25-index"}, {"passages", index.size()},
             {"vocabulary", index.vocabulary_size()}, {"avgdl", index.avgdl()}, {"out", bi.out}};
      if (!bi.run.empty()) {
        require_file(bi.queries, "queries");
        auto queries = load_queries(bi.queries);
        Run run;
        for (const auto& q : queries.queries()) run[q.id] = index.search(q.text, bi.k, q.id);
        write_run(run, fs::path(bi.run), "bm25");
        s["run"] = bi.run;
        s["queries"] = queries.size();
      }
      emit(s);
    };
  });

  // warmup / iterate ---------------------------------------------------------
  auto* warm = app.add_subcommand("warmup", "Step 1: BM25 labels and the warm-up retriever");
  LoopOptions wo;
  add_loop_options(warm, wo);
  warm->callback([&] {
    action = [&] {
      auto in = load_loop_inputs(wo);
      Validation val{&in.validation_queries, &in.qrels, 10};
      auto state = warmup(in.corpus, in.queries, wo.cfg, in.has_validation ? &val : nullptr);
      json s{{"command", "warmup"},
             {"t", 0},
             {"training_queries", in.queries.size()},
             {"examples", state.trace[0].examples},
             {"skipped_examples", state.trace[0].skipped_examples},
             {"retriever_checksum", hex(state.trace[0].retriever_checksum)},
             {"trace", trace_summary(state)},
             {"workdir", wo.workdir}};
      emit(s);
    };
  });

  auto* iter = app.add_subcommand("iterate", "Steps 2-3: alternate reranker and retriever training up to --T");
  LoopOptions io;
  std::size_t T = 2;
  add_loop_options(iter, io);
  iter->add_option("--T", T, "Final iteration number (0 runs nothing)");
  iter->callback([&] {
    action = [&] {
      auto in = load_loop_inputs(io);
      Validation val{&in.validation_queries, &in.qrels, 10};
      auto state = load_state(io.workdir);
      const std::size_t before = state.t;
      state = iterate(std::move(state), T, in.corpus, in.queries, io.cfg, in.has_validation ? &val : nullptr);
      json s{{"command", "iterate"},
             {"iterations_performed", state.t - before},
             {"t", state.t},
             {"trace", trace_summary(state)}};
      std::vector<std::optional<double>> rm;
      for (const auto& rec : state.trace) rm.push_back(rec.retriever_metric);
      auto best = best_iteration(rm);
      s["best_retriever_iteration"] = best ? json(*best) : json(nullptr);
      s["workdir"] = io.workdir;
      emit(s);
    };
  });

  // select -------------------------------------------------------------------
  auto* sel = app.add_subcommand("select", "Copy the best validated retriever and reranker to final.*.ckpt");
  std::string sel_dir;
  sel->add_option("--workdir", sel_dir, "Artifact directory")->required();
  sel->callback([&] {
    action = [&] {
      auto state = load_state(sel_dir);
      auto f = select_final(state);
      save_checkpoint(f.retriever, fs::path(sel_dir) / "final.retriever.ckpt");
      save_checkpoint(f.reranker, fs::path(sel_dir) / "final.reranker.ckpt");
      emit({{"command", "select"},
            {"retriever_iteration", f.retriever_iteration},
            {"reranker_iteration", f.reranker_iteration}});
    };
  });

  // retrieve -----------------------------------------------------------------
  auto* ret = app.add_subcommand("retrieve", "Dense top-k run for a query set");
  struct {
    std::string retriever, corpus, queries, out, cache;
    std::size_t k = 100;
    bool no_title = false;
    Common common;
  } rt;
  ret->add_option("--retriever", rt.retriever, "Retriever checkpoint")->required();
  ret->add_option("--corpus", rt.corpus, "Corpus JSONL")->required();
  ret->add_option("--queries", rt.queries, "Queries JSONL")->required();
  ret->add_option("--out", rt.out, "TREC run output")->required();
  ret->add_option("--top-k", rt.k, "Run depth")->check(CLI::PositiveNumber);
  ret->add_option("--cache", rt.cache, "Passage-matrix cache file");
  ret->add_flag("--no-title", rt.no_title, "Encode passage text without titles");
  add_threads(ret, rt.common);
  ret->callback([&] {
    action = [&] {
      for (auto* p : {&rt.retriever, &rt.corpus, &rt.queries}) require_file(*p, "input");
      auto model = load_dense_checkpoint(rt.retriever);
      auto corpus = load_corpus(rt.corpus);
      auto queries = load_queries(rt.queries);
      auto matrix = rt.cache.empty()
                        ? encode_corpus(model, corpus, rt.common.threads, !rt.no_title)
                        : cached_passage_matrix(model, corpus, rt.cache, rt.common.threads, !rt.no_title);
      auto run = dense_run(model, matrix, corpus, queries, rt.k, rt.common.threads);
      write_run(run, fs::path(rt.out), "dense");
      emit({{"command", "retrieve"}, {"queries", queries.size()}, {"out", rt.out}});
    };
  });

  // rerank -------------------------------------------------------------------
  auto* rr = app.add_subcommand("rerank", "Rerank a retriever's (or a run file's) top-k lists");
  struct {
    std::string reranker, retriever, run, corpus, queries, out;
    std::size_t k = 100, depth = 100;
    bool no_title = false;
    Common common;
  } ro;
  rr->add_option("--reranker", ro.reranker, "Reranker checkpoint")->required();
  rr->add_option("--retriever", ro.retriever, "Retriever checkpoint producing the candidates");
  rr->add_option("--run", ro.run, "Candidate run file (instead of --retriever)");
  rr->add_option("--corpus", ro.corpus, "Corpus JSONL")->required();
  rr->add_option("--queries", ro.queries, "Queries JSONL")->required();
  rr->add_option("--out", ro.out, "TREC run output")->required();
  rr->add_option("--top-k", ro.k, "Candidates per query")->check(CLI::PositiveNumber);
  rr->add_option("--depth", ro.depth, "Reranked prefix length")->check(CLI::PositiveNumber);
  rr->add_flag("--no-title", ro.no_title, "Score passage text without titles");
  add_threads(rr, ro.common);
  rr->callback([&] {
    action = [&] {
      if (ro.retriever.empty() == ro.run.empty()) throw ConfigError("give exactly one of --retriever or --run");
      for (auto* p : {&ro.reranker, &ro.corpus, &ro.queries}) require_file(*p, "input");
      auto reranker = load_rerank_checkpoint(ro.reranker);
      auto corpus = load_corpus(ro.corpus);
      auto queries = load_queries(ro.queries);
      Run candidates;
      if (!ro.retriever.empty()) {
        require_file(ro.retriever, "retriever");
        auto model = load_dense_checkpoint(ro.retriever);
        auto matrix = encode_corpus(model, corpus, ro.common.threads, !ro.no_title);
        candidates = dense_run(model, matrix, corpus, queries, ro.k, ro.common.threads);
      } else {
        require_file(ro.run, "run");
        candidates = read_run(fs::path(ro.run));
      }
      Run out;
      for (const auto& q : queries.queries()) {
        auto it = candidates.find(q.id);
        if (it == candidates.end()) continue;
        out[q.id] = rerank(reranker, q.text, it->second, ro.depth, corpus, !ro.no_title);
      }
      write_run(out, fs::path(ro.out), "rerank");
      emit({{"command", "rerank"}, {"queries", out.size()}, {"out", ro.out}});
    };
  });

  // eval ---------------------------------------------------------------------
  auto* ev = app.add_subcommand("eval", "nDCG@k, recall@k and top-k accuracy of a run");
  struct {
    std::string run, qrels, report;
    std::size_t k = 10;
    std::vector<std::size_t> recall{100};
    std::vector<std::size_t> accuracy{20, 100};
  } eo;
  ev->add_option("--run", eo.run, "TREC run file")->required();
  ev->add_option("--qrels", eo.qrels, "Qrels TSV")->required();
  ev->add_option("--k", eo.k, "nDCG cutoff")->check(CLI::PositiveNumber);
  ev->add_option("--recall-k", eo.recall, "Recall cutoffs")->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  ev->add_option("--accuracy-k", eo.accuracy, "Top-k accuracy cutoffs")
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  ev->add_option("--report", eo.report, "Write per-query reports (JSON) here");
  ev->callback([&] {
    action = [&] {
      require_file(eo.run, "run");
      require_file(eo.qrels, "qrels");
      auto run = read_run(fs::path(eo.run));
      auto qrels = load_qrels(eo.qrels);
      std::vector<Report> reports{ndcg_at_k(run, qrels, eo.k)};
      for (auto k : eo.recall) reports.push_back(recall_at_k(run, qrels, k));
      for (auto k : eo.accuracy) reports.push_back(topk_accuracy(run, qrels, k));
      json s{{"command", "eval"}};
      for (const auto& r : reports) s[r.metric + "@" + std::to_string(r.k)] = r.mean;
      s["n"] = reports[0].n;
      s["excluded"] = reports[0].excluded;
      if (!eo.report.empty()) {
        std::ofstream out(eo.report, std::ios::binary | std::ios::trunc);
        if (!out) throw RuntimeFailure("cannot write " + eo.report);
        out << "[";
        for (std::size_t i = 0; i < reports.size(); ++i) out << (i ? "," : "") << reports[i].to_json();
        out << "]\n";
      }
      emit(s);
    };
  });

  // ensemble -----------------------------------------------------------------
  auto* en = app.add_subcommand("ensemble", "Search with the sum of several retrievers' scores");
  struct {
    std::vector<std::string> retrievers;
    std::string corpus, queries, out;
    std::size_t k = 100;
    bool no_title = false;
    Common common;
  } eno;
  en->add_option("--retriever", eno.retrievers, "Retriever checkpoints (repeat)")
      ->required()
      ->multi_option_policy(CLI::MultiOptionPolicy::TakeAll);
  en->add_option("--corpus", eno.corpus, "Corpus JSONL")->required();
  en->add_option("--queries", eno.queries, "Queries JSONL")->required();
  en->add_option("--out", eno.out, "TREC run output")->required();
  en->add_option("--top-k", eno.k, "Run depth")->check(CLI::PositiveNumber);
  en->add_flag("--no-title", eno.no_title, "Encode passage text without titles");
  add_threads(en, eno.common);
  en->callback([&] {
    action = [&] {
      require_file(eno.corpus, "corpus");
      require_file(eno.queries, "queries");
      auto corpus = load_corpus(eno.corpus);
      auto queries = load_queries(eno.queries);
      std::vector<DenseModel> models;
      std::vector<PassageMatrix> matrices;
      for (const auto& p : eno.retrievers) {
        require_file(p, "retriever");
        models.push_back(load_dense_checkpoint(p));
        matrices.push_back(encode_corpus(models.back(), corpus, eno.common.threads, !eno.no_title));
      }
      std::vector<const DenseModel*> mp;
      std::vector<const PassageMatrix*> pp;
      for (std::size_t i = 0; i < models.size(); ++i) {
        mp.push_back(&models[i]);
        pp.push_back(&matrices[i]);
      }
      Run run;
      for (const auto& q : queries.queries()) {
        run[q.id] = to_ranked_list(q.id, ensemble_search(mp, pp, q.text, eno.k), corpus);
      }
      write_run(run, fs::path(eno.out), "ensemble");
      emit({{"command", "ensemble"}, {"models", models.size()}, {"queries", queries.size()}, {"out", eno.out}});
    };
  });

  // finetune -----------------------------------------------------------------
  auto* ft = app.add_subcommand("finetune", "Supervised two-stage fine-tuning with mined hard negatives");
  struct {
    std::string init, corpus, queries, qrels, out, stage1_out;
    std::uint32_t buckets = 65536, dim = 64;
    std::uint64_t seed = 0;
    bool no_title = false;
    FinetuneConfig cfg;
  } fo;
  ft->add_option("--init", fo.init, "Starting retriever checkpoint (fresh init when absent)");
  ft->add_option("--corpus", fo.corpus, "Corpus JSONL")->required();
  ft->add_option("--queries", fo.queries, "Queries JSONL")->required();
  ft->add_option("--qrels", fo.qrels, "Qrels TSV")->required();
  ft->add_option("--out", fo.out, "Stage-2 checkpoint output")->required();
  ft->add_option("--stage1-out", fo.stage1_out, "Stage-1 checkpoint output");
  ft->add_option("--seed", fo.seed, "Seed")->required();
  ft->add_option("--buckets", fo.buckets, "Hash buckets for a fresh init");
  ft->add_option("--dim", fo.dim, "Embedding width for a fresh init");
  ft->add_option("--hard-negative-prob", fo.cfg.hard_negative_prob, "Chance of a mined hard negative in stage 2");
  ft->add_option("--mine-depth", fo.cfg.mine_depth, "Mined negatives per query");
  ft->add_flag("--no-title", fo.no_title, "Encode passage text without titles");
  add_retriever_training(ft, fo.cfg.train, "");
  Common ft_common;
  add_threads(ft, ft_common);
  ft->callback([&] {
    action = [&] {
      for (auto* p : {&fo.corpus, &fo.queries, &fo.qrels}) require_file(*p, "input");
      auto corpus = load_corpus(fo.corpus);
      auto queries = load_queries(fo.queries);
      auto qrels = load_qrels(fo.qrels);
      DenseModel model;
      if (!fo.init.empty()) {
        require_file(fo.init, "init checkpoint");
        model = load_dense_checkpoint(fo.init);
      } else {
        model = DenseModel::initialize(fo.buckets, fo.dim, derive_seed(fo.seed, "init"));
      }
      fo.cfg.train.seed = fo.seed;
      fo.cfg.train.include_title = !fo.no_title;
      fo.cfg.threads = ft_common.threads;
      auto res = finetune_supervised(model, qrels, queries, corpus, fo.cfg);
      save_checkpoint(res.stage2, fo.out);
      if (!fo.stage1_out.empty()) save_checkpoint(res.stage1, fo.stage1_out);
      emit({{"command", "finetune"},
            {"queries", res.mined.size()},
            {"skipped_queries", res.skipped_queries},
            {"checksum", hex(res.stage2.checksum())},
            {"out", fo.out}});
    };
  });

  // synth --------------------------------------------------------------------
  auto* sy = app.add_subcommand("synth", "Write a seeded latent-topic world (corpus, queries, qrels)");
  struct {
    std::string out;
    WorldConfig w;
  } so;
  sy->add_option("--out", so.out, "Output directory")->required();
  sy->add_option("--passages", so.w.passages, "Passages");
  sy->add_option("--topics", so.w.topics, "Latent topics");
  sy->add_option("--content-words", so.w.content_words, "Content vocabulary size");
  sy->add_option("--words-per-topic", so.w.words_per_topic, "Words per topic");
  sy->add_option("--background-words", so.w.background_words, "Background vocabulary size");
  sy->add_option("--topic-word-prob", so.w.topic_word_prob, "Chance a passage word is a topic word");
  sy->add_option("--secondary-share", so.w.secondary_share, "Share of topic words from the secondary topic");
  sy->add_option("--train-queries", so.w.train_queries, "Cropped training queries");
  sy->add_option("--validation-queries", so.w.validation_queries, "Judged held-out queries");
  sy->add_option("--query-topic-word-prob", so.w.query_topic_word_prob, "Chance a query word is a topic word");
  sy->add_option("--seed", so.w.seed, "World seed");
  sy->callback([&] {
    action = [&] {
      auto world = make_world(so.w);
      fs::path dir(so.out);
      fs::create_directories(dir);
      save_corpus(world.corpus, dir / "corpus.jsonl");
      save_queries(world.train_queries, dir / "train_queries.jsonl");
      save_queries(world.validation_queries, dir / "queries.jsonl");
      save_qrels(world.validation_qrels, dir / "qrels.tsv");
      emit({{"command", "synth"},
            {"passages", world.corpus.size()},
            {"train_queries", world.train_queries.size()},
            {"validation_queries", world.validation_queries.size()},
            {"out", so.out}});
    };
  });

  // Parse: config-derived arguments go right after the subcommand name so
  // that explicit flags, which come later, take precedence.
  std::vector<std::string> args(argv + 1, argv + argc);
  try {
    std::size_t sub_at = args.size();
    std::optional<std::string> cfg_file;
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (args[i] == "--config" && i + 1 < args.size()) {
        cfg_file = args[i + 1];
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i), args.begin() + static_cast<std::ptrdiff_t>(i) + 2);
        --i;
      } else if (args[i].rfind("--config=", 0) == 0) {
        cfg_file = args[i].substr(9);
        args.erase(args.begin() + static_cast<std::ptrdiff_t>(i));
        --i;
      }
    }
    for (std::size_t i = 0; i < args.size(); ++i) {
      if (app.get_subcommand_no_throw(args[i])) {
        sub_at = i;
        break;
      }
    }
    if (cfg_file && sub_at < args.size()) {
      std::set<std::string> given;
      for (std::size_t i = sub_at + 1; i < args.size(); ++i) {
        if (args[i].rfind("--", 0) != 0) continue;
        given.insert(args[i].substr(2, args[i].find('=') == std::string::npos ? std::string::npos : args[i].find('=') - 2));
      }
      auto extra = config_arguments(*cfg_file, app, app.get_subcommand(args[sub_at]), given);
      args.insert(args.begin() + static_cast<std::ptrdiff_t>(sub_at) + 1, extra.begin(), extra.end());
    }
    std::reverse(args.begin(), args.end());
    app.parse(args);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    report_error("config", e.what(), 2);
    return 2;
  } catch (const Error& e) {
    int code = exit_code_of(e);
    report_error(code == 2 ? "config" : code == 3 ? "data" : "runtime", e.what(), code);
    return code;
  }

  try {
    action();
  } catch (const Error& e) {
    int code = exit_code_of(e);
    report_error(code == 2 ? "config" : code == 3 ? "data" : "runtime", e.what(), code);
    return code;
  } catch (const std::exception& e) {
    report_error("runtime", e.what(), 4);
    return 4;
  }
  return 0;
}
