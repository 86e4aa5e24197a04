// Acceptance suite: one PASS/FAIL line per criterion.
//
// usage: altboot_acceptance <altboot-cli> <demo-dir> <scratch-dir> [criterion...]

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "altboot/bm25.hpp"
#include "altboot/bootstrap.hpp"
#include "altboot/dense.hpp"
#include "altboot/math.hpp"
#include "altboot/metrics.hpp"
#include "altboot/rerank.hpp"
#include "altboot/synthetic.hpp"
#include "altboot/text.hpp"
#include "oracles.hpp"
#include "tiny_world.hpp"

namespace fs = std::filesystem;
using namespace altboot;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

struct Paths {
  std::string cli;
  fs::path demo;
  fs::path scratch;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

// ---- 1 ---------------------------------------------------------------------

Outcome bm25_oracle() {
  auto t0 = std::chrono::steady_clock::now();
  auto corpus = oracle::random_corpus(500, 2024);
  auto index = Bm25Index::build(corpus);
  std::vector<std::vector<std::string>> docs;
  for (std::size_t i = 0; i < corpus.size(); ++i) docs.push_back(oracle::words(corpus.indexed_text(i)));

  std::mt19937_64 rng(7);
  std::size_t compared = 0, mismatched = 0;
  for (int trial = 0; trial < 50; ++trial) {
    auto text = oracle::random_text(rng, 1 + trial % 8);
    auto scores = oracle::bm25_all(docs, oracle::words(text));
    for (std::size_t k : {1, 10, 50}) {
      auto expected = oracle::argsort_desc(scores, k, true);
      auto got = index.search(text, k, "q");
      std::vector<std::string> want_ids, got_ids;
      for (auto i : expected) want_ids.push_back(corpus[i].id);
      for (const auto& e : got.entries) got_ids.push_back(e.passage_id);
      ++compared;
      if (want_ids != got_ids) ++mismatched;
    }
  }
  double secs = seconds_since(t0);
  return {mismatched == 0 && secs < 5.0,
          std::to_string(compared) + " (query,k) rankings, " + std::to_string(mismatched) +
              " mismatched, " + fmt("%.2fs", secs)};
}

// ---- 2 ---------------------------------------------------------------------

TokenSeq random_tokens(std::mt19937_64& rng, std::size_t max_len, std::size_t vocab) {
  std::uniform_int_distribution<std::size_t> len(1, max_len);
  return oracle::words(oracle::random_text(rng, len(rng), vocab));
}

void collect_dense(BasicDenseModel<double>& m, const DenseGrad& g, std::vector<double*>& params,
                   std::vector<double>& analytic) {
  for (Side side : {Side::Query, Side::Passage}) {
    const auto& rows = side == Side::Query ? g.query : g.passage;
    auto& table = m.table(side);
    for (std::uint32_t r = 0; r < m.buckets; ++r) {
      auto it = rows.find(r);
      if (it == rows.end() && r % 5 != 0) continue;
      for (std::uint32_t d = 0; d < m.dim; ++d) {
        params.push_back(&table[r * m.dim + d]);
        analytic.push_back(it == rows.end() ? 0.0 : it->second[d]);
      }
    }
  }
}

void collect_rerank(BasicRerankModel<double>& m, const RerankGrad& g, std::vector<double*>& params,
                    std::vector<double>& analytic) {
  for (std::uint32_t r = 0; r < m.buckets; ++r) {
    auto it = g.embed.find(r);
    if (it == g.embed.end() && r % 7 != 0) continue;
    for (std::uint32_t d = 0; d < m.dim; ++d) {
      params.push_back(&m.embed[r * m.dim + d]);
      analytic.push_back(it == g.embed.end() ? 0.0 : it->second[d]);
    }
  }
  for (std::size_t i = 0; i < m.w1.size(); ++i) {
    params.push_back(&m.w1[i]);
    analytic.push_back(g.w1[i]);
  }
  for (std::size_t i = 0; i < m.hidden; ++i) {
    params.push_back(&m.b1[i]);
    analytic.push_back(g.b1[i]);
    params.push_back(&m.w2[i]);
    analytic.push_back(g.w2[i]);
  }
  params.push_back(&m.b2);
  analytic.push_back(g.b2);
}

Outcome gradients() {
  auto t0 = std::chrono::steady_clock::now();
  std::mt19937_64 rng(2718);
  std::normal_distribution<double> normal(0.0, 1.0);
  double worst_cl = 0, worst_kl = 0, worst_ce = 0;

  for (int i = 0; i < 20; ++i) {
    auto m = BasicDenseModel<double>::initialize(32, 6, 500 + i, 0.5);
    for (auto& x : m.passage_table) x = 0.5 * normal(rng);
    std::vector<ContrastiveTriple> batch;
    for (int b = 0; b < 1 + i % 4; ++b) {
      batch.push_back({random_tokens(rng, 5, 40), random_tokens(rng, 8, 40), random_tokens(rng, 8, 40)});
    }
    const double tau = i % 3 == 0 ? 0.5 : 1.0;
    auto res = contrastive_loss(m, std::span<const ContrastiveTriple>(batch), tau);
    std::vector<double*> params;
    std::vector<double> analytic;
    collect_dense(m, res.grad, params, analytic);
    worst_cl = std::max(worst_cl, oracle::gradient_error(params, analytic, [&] {
      return contrastive_loss(m, std::span<const ContrastiveTriple>(batch), tau).loss;
    }));
  }

  for (int i = 0; i < 20; ++i) {
    auto m = BasicRerankModel<double>::initialize(24, 4, 5, 900 + i, 0.7);
    for (auto& x : m.b1) x = 0.3 * normal(rng);
    m.b2 = 0.3 * normal(rng);
    auto q = random_tokens(rng, 5, 30);
    std::vector<TokenSeq> cand;
    for (int j = 0; j < 3 + i % 4; ++j) cand.push_back(random_tokens(rng, 8, 30));
    std::vector<double> logits(cand.size());
    for (auto& x : logits) x = 2.0 * normal(rng);
    auto teacher = softmax(logits);

    auto kl = kl_loss(m, q, std::span<const TokenSeq>(cand), teacher, KlDirection::StudentTeacher);
    std::vector<double*> params;
    std::vector<double> analytic;
    collect_rerank(m, kl.grad, params, analytic);
    worst_kl = std::max(worst_kl, oracle::gradient_error(params, analytic, [&] {
      return kl_loss(m, q, std::span<const TokenSeq>(cand), teacher, KlDirection::StudentTeacher).loss;
    }));

    auto negs = std::span<const TokenSeq>(cand).subspan(1);
    auto ce = ce_loss(m, q, cand[0], negs);
    params.clear();
    analytic.clear();
    collect_rerank(m, ce.grad, params, analytic);
    worst_ce = std::max(worst_ce, oracle::gradient_error(params, analytic, [&] {
      return ce_loss(m, q, cand[0], negs).loss;
    }));
  }
  double secs = seconds_since(t0);
  bool ok = worst_cl <= 1e-4 && worst_kl <= 1e-4 && worst_ce <= 1e-4 && secs < 30.0;
  return {ok, "max rel err CL " + fmt("%.2e", worst_cl) + ", KL " + fmt("%.2e", worst_kl) + ", CE " +
                  fmt("%.2e", worst_ce) + " (20 instances each), " + fmt("%.2fs", secs)};
}

// ---- 3 ---------------------------------------------------------------------

Outcome extraction() {
  ExtractionRule rule;  // k = 50, 10 positives, 5 negatives
  std::size_t bad = 0;
  for (std::size_t n = 1; n <= 60; ++n) {
    RankedList list{"q", {}};
    for (std::size_t r = 1; r <= n; ++r) list.entries.push_back({"p" + std::to_string(r), 1.0 / r, r});
    auto ex = extract_labels(list, rule);
    auto want = oracle::extraction(n, rule.k, rule.k_pos, rule.k_neg);
    std::vector<std::string> wp, wn;
    for (auto r : want.pos) wp.push_back("p" + std::to_string(r));
    for (auto r : want.neg) wn.push_back("p" + std::to_string(r));
    if (ex.positives != wp || ex.negatives != wn) ++bad;
  }
  RankedList fifty{"q", {}};
  for (std::size_t r = 1; r <= 50; ++r) fifty.entries.push_back({"p" + std::to_string(r), 1.0 / r, r});
  auto ex = extract_labels(fifty, rule);
  std::vector<std::string> pos, neg;
  for (int r = 1; r <= 10; ++r) pos.push_back("p" + std::to_string(r));
  for (int r = 46; r <= 50; ++r) neg.push_back("p" + std::to_string(r));
  bool fifty_ok = ex.positives == pos && ex.negatives == neg;
  return {bad == 0 && fifty_ok, "lengths 1..60: " + std::to_string(bad) + " mismatches; n=50 -> positives 1-10, negatives 46-50: " +
                                    (fifty_ok ? "yes" : "no")};
}

// ---- 4 and 5 -----------------------------------------------------------------

// The shipped configuration for the direction-of-effect checks.
WorldConfig shipped_world() {
  WorldConfig w;  // 3,000 passages, 500 cropped queries
  w.validation_queries = 1000;
  return w;
}

BootstrapConfig shipped_loop() {
  BootstrapConfig c;
  c.seed = 3;
  c.retriever.epochs = 30;
  c.retriever.learning_rate = 0.01;
  c.reranker.epochs = 60;
  c.reranker.learning_rate = 0.003;
  c.reranker.hidden = 64;
  c.reranker.noise.rate = 0.0;
  return c;
}

struct LoopResult {
  std::vector<double> full;
  std::vector<double> self;
  double seconds = 0;
  bool ran = false;
};

LoopResult& synthetic_loop() {
  static LoopResult r;
  if (r.ran) return r;
  auto t0 = std::chrono::steady_clock::now();
  auto world = make_world(shipped_world());
  Validation val{&world.validation_queries, &world.validation_qrels, 10};
  auto cfg = shipped_loop();
  auto warm = warmup(world.corpus, world.train_queries, cfg, &val);
  auto full = iterate(warm, 2, world.corpus, world.train_queries, cfg, &val);
  r.seconds = seconds_since(t0);
  auto self_cfg = cfg;
  self_cfg.self_supervision = true;
  auto self = iterate(warm, 2, world.corpus, world.train_queries, self_cfg, &val);
  for (const auto& rec : full.trace) r.full.push_back(rec.retriever_metric.value());
  for (const auto& rec : self.trace) r.self.push_back(rec.retriever_metric.value());
  r.ran = true;
  return r;
}

Outcome bootstrapping_direction() {
  auto& r = synthetic_loop();
  const double d1 = r.full[1] - r.full[0], d2 = r.full[2] - r.full[1];
  bool ok = d1 >= 0.005 && d2 >= 0.005 && r.seconds < 600.0;
  return {ok, "D0 " + fmt("%.4f", r.full[0]) + ", D1 " + fmt("%.4f", r.full[1]) + " (" + fmt("%+.4f", d1) + "), D2 " +
                  fmt("%.4f", r.full[2]) + " (" + fmt("%+.4f", d2) + "), " + fmt("%.1fs", r.seconds)};
}

Outcome self_supervision() {
  auto& r = synthetic_loop();
  return {r.self[2] <= r.full[2],
          "self-supervised D2 " + fmt("%.4f", r.self[2]) + " vs full loop D2 " + fmt("%.4f", r.full[2])};
}

// ---- 6 ---------------------------------------------------------------------

Outcome reinitialization() {
  auto world = make_world(fixture::tiny_world_config());
  auto cfg = fixture::tiny_loop_config();
  auto warm = warmup(world.corpus, world.train_queries, cfg);
  auto st = iterate(warm, 2, world.corpus, world.train_queries, cfg);

  const auto d0 = st.retrievers[0].checksum();
  bool ok = st.trace[0].retriever_init_checksum == cfg.fresh_retriever().checksum();
  for (std::size_t t = 1; t <= 2; ++t) {
    ok = ok && st.trace[t].retriever_init_checksum == d0;
    ok = ok && st.trace[t].reranker_init_checksum == cfg.reranker_config(t).fresh_model().checksum();
    ok = ok && st.trace[t].retriever_checksum == st.retrievers[t].checksum();
  }

  auto warm_cfg = cfg;
  warm_cfg.warm_start_retriever = true;
  warm_cfg.warm_start_reranker = true;
  auto ws = iterate(warm, 2, world.corpus, world.train_queries, warm_cfg);
  bool flipped = ws.trace[2].retriever_init_checksum == ws.retrievers[1].checksum() &&
                 ws.trace[2].retriever_init_checksum != d0 &&
                 ws.trace[2].reranker_init_checksum == ws.rerankers[1]->checksum() &&
                 ws.trace[2].reranker_init_checksum != cfg.reranker_config(2).fresh_model().checksum() &&
                 ws.trace[2].retriever_checksum != st.trace[2].retriever_checksum;
  return {ok && flipped, std::string("fresh-start checksums ") + (ok ? "match" : "differ") +
                             "; warm-start flags change init checksums: " + (flipped ? "yes" : "no")};
}

// ---- 7 ---------------------------------------------------------------------

Outcome ensemble_identity() {
  auto corpus = oracle::random_corpus(500, 77);
  auto a = DenseModel::initialize(2048, 16, 1, 0.5);
  auto b = DenseModel::initialize(2048, 16, 2, 0.5);
  auto ma = encode_corpus(a, corpus), mb = encode_corpus(b, corpus);
  std::mt19937_64 rng(5);
  std::size_t rank_mismatch = 0;
  double worst = 0;
  for (int q = 0; q < 100; ++q) {
    auto text = oracle::random_text(rng, 2 + q % 6);
    const DenseModel* self[] = {&a, &a};
    const PassageMatrix* self_m[] = {&ma, &ma};
    auto doubled = ensemble_search(self, self_m, text, 100);
    auto single = dense_search(a, ma, text, 100);
    if (doubled.size() != single.size()) ++rank_mismatch;
    for (std::size_t i = 0; i < std::min(doubled.size(), single.size()); ++i) {
      if (doubled[i].ordinal != single[i].ordinal) {
        ++rank_mismatch;
        break;
      }
    }
    const DenseModel* pair[] = {&a, &b};
    const PassageMatrix* pair_m[] = {&ma, &mb};
    auto qa = encode(a, Side::Query, text), qb = encode(b, Side::Query, text);
    for (const auto& h : ensemble_search(pair, pair_m, text, 10)) {
      auto pa = encode(a, Side::Passage, corpus.indexed_text(h.ordinal));
      auto pb = encode(b, Side::Passage, corpus.indexed_text(h.ordinal));
      long double s = 0;
      for (std::size_t d = 0; d < qa.size(); ++d) s += (long double)qa[d] * pa[d];
      for (std::size_t d = 0; d < qb.size(); ++d) s += (long double)qb[d] * pb[d];
      worst = std::max(worst, std::abs(h.score - static_cast<double>(s)));
    }
  }
  return {rank_mismatch == 0 && worst <= 1e-9,
          "self-ensemble ranking mismatches " + std::to_string(rank_mismatch) +
              "/100; max |ensemble - sum of dots| " + fmt("%.2e", worst)};
}

// ---- 8 ---------------------------------------------------------------------

Outcome metric_correctness() {
  Qrels hand{{"q", {{"a", 1}, {"c", 1}}}};
  RankedList l{"q", {{"a", 3, 1}, {"b", 2, 2}, {"c", 1, 3}}};
  double hand_ndcg = ndcg_at_k(Run{{"q", l}}, hand, 10).mean;
  // Relevant at ranks 1 and 3: DCG 1 + 1/log2(4) = 1.5, IDCG 1 + 1/log2(3) = 1.6309.
  const double dcg = 1.0 + 1.0 / std::log2(4.0), idcg = 1.0 + 1.0 / std::log2(3.0);
  bool hand_ok = dcg == 1.5 && std::abs(idcg - 1.6309) < 5e-5 && std::abs(hand_ndcg - dcg / idcg) <= 1e-9 &&
                 std::abs(hand_ndcg - 0.9198) < 1e-4;

  std::mt19937_64 rng(4242);
  std::uniform_int_distribution<int> grade(0, 3), len(0, 30), pool(5, 50);
  double worst = 0;
  for (int trial = 0; trial < 100; ++trial) {
    Run run;
    Qrels qrels;
    const int n = pool(rng);
    for (int q = 0; q < 4; ++q) {
      std::string qid = "q" + std::to_string(q);
      std::vector<std::string> ids;
      for (int i = 0; i < n; ++i) ids.push_back("d" + std::to_string(i));
      std::shuffle(ids.begin(), ids.end(), rng);
      ids.resize(std::min(n, len(rng)));
      RankedList list{qid, {}};
      for (std::size_t i = 0; i < ids.size(); ++i) list.entries.push_back({ids[i], double(ids.size() - i), i + 1});
      run[qid] = list;
      for (int i = 0; i < n; ++i) {
        if (rng() % 3 == 0) qrels[qid]["d" + std::to_string(i)] = grade(rng);
      }
    }
    for (std::size_t k : {5, 10, 20}) {
      auto nd = ndcg_at_k(run, qrels, k);
      auto re = recall_at_k(run, qrels, k);
      for (const auto& [qid, list] : run) {
        if (!qrels.count(qid)) continue;
        std::vector<std::string> ids;
        for (const auto& e : list.entries) ids.push_back(e.passage_id);
        worst = std::max(worst, std::abs(nd.per_query[qid] - oracle::ndcg(ids, qrels[qid], k)));
        worst = std::max(worst, std::abs(re.per_query[qid] - oracle::recall(ids, qrels[qid], k)));
      }
    }
  }
  return {hand_ok && worst <= 1e-9,
          "hand case nDCG " + fmt("%.4f", hand_ndcg) + "; max deviation from reference over 100 instances " +
              fmt("%.2e", worst)};
}

// ---- 9 ---------------------------------------------------------------------

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

int run_cli(const Paths& paths, const std::string& args, const fs::path& log) {
  std::string cmd = "\"" + paths.cli + "\" " + args + " >> \"" + log.string() + "\" 2>&1";
  int rc = std::system(cmd.c_str());
  return rc;
}

Outcome determinism(const Paths& paths) {
  if (paths.cli.empty()) return {false, "no CLI path given"};
  fs::create_directories(paths.scratch);
  const auto log = paths.scratch / "determinism.log";
  std::vector<fs::path> dirs;
  for (const auto* name : {"run_a_t1", "run_b_t1", "run_c_t8"}) {
    auto dir = paths.scratch / name;
    fs::remove_all(dir);
    dirs.push_back(dir);
  }
  const auto demo = paths.demo;
  auto common = [&](const fs::path& dir, int threads) {
    return "--corpus \"" + (demo / "corpus.jsonl").string() + "\" --queries \"" +
           (demo / "train_queries.jsonl").string() + "\" --validation-queries \"" +
           (demo / "queries.jsonl").string() + "\" --qrels \"" + (demo / "qrels.tsv").string() +
           "\" --workdir \"" + dir.string() + "\" --threads " + std::to_string(threads);
  };
  const std::string cfg = "--config \"" + (demo / "config.json").string() + "\" ";
  const int threads[] = {1, 1, 8};
  for (std::size_t i = 0; i < dirs.size(); ++i) {
    if (run_cli(paths, cfg + "warmup " + common(dirs[i], threads[i]), log) != 0 ||
        run_cli(paths, cfg + "iterate " + common(dirs[i], threads[i]), log) != 0) {
      return {false, "pipeline run failed, see " + log.string()};
    }
  }
  std::set<std::string> names;
  for (const auto& e : fs::directory_iterator(dirs[0])) names.insert(e.path().filename().string());
  std::size_t differing = 0;
  for (std::size_t i = 1; i < dirs.size(); ++i) {
    std::set<std::string> other;
    for (const auto& e : fs::directory_iterator(dirs[i])) other.insert(e.path().filename().string());
    if (other != names) ++differing;
    for (const auto& n : names) {
      if (slurp(dirs[0] / n) != slurp(dirs[i] / n)) ++differing;
    }
  }
  std::size_t ckpts = 0, labels = 0;
  for (const auto& n : names) {
    ckpts += n.ends_with(".ckpt");
    labels += n.ends_with(".labels.jsonl");
  }
  bool ok = differing == 0 && names.count("trace.json") && ckpts == 5 && labels == 3;
  return {ok, std::to_string(names.size()) + " artifacts (" + std::to_string(ckpts) + " checkpoints, " +
                  std::to_string(labels) + " label files, trace.json) x 3 runs (threads 1, 1, 8); " +
                  std::to_string(differing) + " differences"};
}

// ---- 10 --------------------------------------------------------------------

Outcome noise_contract() {
  std::mt19937_64 rng(99);
  std::size_t bad = 0, identity_bad = 0;
  for (int i = 0; i < 1000; ++i) {
    TokenSeq input;
    for (int j = 0; j < 20; ++j) input.push_back("w" + std::to_string(rng() % 500));
    NoiseConfig cfg;
    cfg.rate = 0.1;
    cfg.seed = rng();
    auto out = corrupt(input, cfg);
    auto masks = std::count(out.begin(), out.end(), cfg.mask_symbol);
    if (out.size() != 18 || masks != 2) ++bad;
    cfg.rate = 0.0;
    if (corrupt(input, cfg) != input) ++identity_bad;
  }
  return {bad == 0 && identity_bad == 0, "rate 0.1: " + std::to_string(bad) +
                                             "/1000 violate length 18 with 2 masks; rate 0: " +
                                             std::to_string(identity_bad) + "/1000 not identity"};
}

}  // namespace

int main(int argc, char** argv) {
  Paths paths;
  if (argc > 1) paths.cli = argv[1];
  paths.demo = argc > 2 ? fs::path(argv[2]) : fs::path("data/demo");
  paths.scratch = argc > 3 ? fs::path(argv[3]) : fs::temp_directory_path() / "altboot_acceptance";
  std::set<int> only;
  for (int i = 4; i < argc; ++i) only.insert(std::atoi(argv[i]));

  struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> check;
  };
  std::vector<Criterion> criteria{
      {1, "bm25 search equals brute force", bm25_oracle},
      {2, "analytic gradients match finite differences", gradients},
      {3, "label extraction rule", extraction},
      {4, "bootstrapping improves the retriever", bootstrapping_direction},
      {5, "self-supervision does not beat the full loop", self_supervision},
      {6, "re-initialization discipline", reinitialization},
      {7, "ensemble identity", ensemble_identity},
      {8, "metric correctness", metric_correctness},
      {9, "pipeline determinism", [&] { return determinism(paths); }},
      {10, "noise contract", noise_contract},
  };

  int failures = 0;
  for (const auto& c : criteria) {
    if (!only.empty() && !only.count(c.id)) continue;
    Outcome o;
    try {
      o = c.check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += !o.pass;
    std::printf("%s [%d] %s: %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
  }
  return failures == 0 ? 0 : 1;
}
