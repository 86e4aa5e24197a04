#include <doctest.h>

#include <filesystem>
#include <json.hpp>
#include <sstream>

#include "altboot/error.hpp"
#include "altboot/metrics.hpp"
#include "oracles.hpp"

using namespace altboot;

namespace {

RankedList list_of(const std::string& qid, const std::vector<std::string>& ids) {
  RankedList l{qid, {}};
  for (std::size_t i = 0; i < ids.size(); ++i) {
    l.entries.push_back({ids[i], static_cast<double>(ids.size() - i), i + 1});
  }
  return l;
}

std::vector<std::string> ids_of(const RankedList& l) {
  std::vector<std::string> out;
  for (auto& e : l.entries) out.push_back(e.passage_id);
  return out;
}

}  // namespace

TEST_CASE("ndcg hand cases") {
  Qrels qrels{{"q", {{"a", 1}, {"c", 1}}}};
  Run run{{"q", list_of("q", {"a", "b", "c"})}};
  auto r = ndcg_at_k(run, qrels, 3);
  CHECK(r.mean == doctest::Approx(0.9197207891481876).epsilon(1e-12));
  CHECK(r.n == 1);
  CHECK(oracle::ndcg({"a", "b", "c"}, qrels["q"], 3) == doctest::Approx(1.5 / 1.6309297535714575));

  CHECK(ndcg_at_k({{"q", list_of("q", {"a", "c", "b"})}}, qrels, 10).mean == 1.0);
  CHECK(ndcg_at_k({{"q", list_of("q", {"x", "y"})}}, qrels, 10).mean == 0.0);
  CHECK(ndcg_at_k({{"q", list_of("q", {"a"})}}, Qrels{{"q", {{"a", 0}}}}, 10).mean == 0.0);
  CHECK(ndcg_at_k({{"q", list_of("q", {})}}, qrels, 10).mean == 0.0);
  CHECK_THROWS_AS(ndcg_at_k(run, qrels, 0), ConfigError);
}

TEST_CASE("queries without judgments are excluded and counted") {
  Qrels qrels{{"q1", {{"a", 1}}}};
  Run run{{"q1", list_of("q1", {"a"})}, {"q2", list_of("q2", {"a"})}};
  auto r = ndcg_at_k(run, qrels, 10);
  CHECK(r.n == 1);
  CHECK(r.excluded == 1);
  CHECK(r.mean == 1.0);
  auto j = nlohmann::json::parse(r.to_json());
  CHECK(j["metric"] == "ndcg");
  CHECK(j["k"] == 10);
  CHECK(j["n"] == 1);
  CHECK(j["mean"] == 1.0);
  CHECK(j["per_query"]["q1"] == 1.0);
}

TEST_CASE("recall and accuracy") {
  Qrels qrels{{"q", {{"a", 1}, {"b", 2}, {"z", 0}}}};
  CHECK(recall_at_k({{"q", list_of("q", {"a", "b", "c"})}}, qrels, 3).mean == 1.0);
  CHECK(recall_at_k({{"q", list_of("q", {"a", "c", "b"})}}, qrels, 2).mean == 0.5);
  CHECK(topk_accuracy({{"q", list_of("q", {"c", "a"})}}, qrels, 1).mean == 0.0);
  CHECK(topk_accuracy({{"q", list_of("q", {"c", "a"})}}, qrels, 2).mean == 1.0);
  CHECK(topk_accuracy({{"q", list_of("q", {"z"})}}, qrels, 2).mean == 0.0);
}

TEST_CASE("metrics match the reference on random instances") {
  std::mt19937_64 rng(99);
  std::uniform_int_distribution<int> grade(0, 3), len(0, 25), pool(5, 40);
  for (int trial = 0; trial < 100; ++trial) {
    Run run;
    Qrels qrels;
    const int n = pool(rng);
    for (int q = 0; q < 5; ++q) {
      std::string qid = "q" + std::to_string(q);
      std::vector<std::string> all;
      for (int i = 0; i < n; ++i) all.push_back("d" + std::to_string(i));
      std::shuffle(all.begin(), all.end(), rng);
      all.resize(std::min<int>(n, len(rng)));
      run[qid] = list_of(qid, all);
      for (int i = 0; i < n; ++i) {
        if (rng() % 3 == 0) qrels[qid]["d" + std::to_string(i)] = grade(rng);
      }
    }
    for (std::size_t k : {1, 5, 10, 20}) {
      auto nd = ndcg_at_k(run, qrels, k);
      auto re = recall_at_k(run, qrels, k);
      double nd_sum = 0, re_sum = 0;
      std::size_t counted = 0;
      for (const auto& [qid, list] : run) {
        if (!qrels.count(qid)) continue;
        ++counted;
        double a = oracle::ndcg(ids_of(list), qrels[qid], k);
        double b = oracle::recall(ids_of(list), qrels[qid], k);
        CHECK(std::abs(nd.per_query[qid] - a) <= 1e-9);
        CHECK(std::abs(re.per_query[qid] - b) <= 1e-9);
        CHECK(nd.per_query[qid] >= 0.0);
        CHECK(nd.per_query[qid] <= 1.0 + 1e-12);
        nd_sum += a;
        re_sum += b;
      }
      if (counted) {
        CHECK(std::abs(nd.mean - nd_sum / counted) <= 1e-9);
        CHECK(std::abs(re.mean - re_sum / counted) <= 1e-9);
      }
    }
  }
}

TEST_CASE("promoting a relevant item never lowers ndcg") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<std::string> ids;
    Qrels qrels;
    for (int i = 0; i < 15; ++i) {
      ids.push_back("d" + std::to_string(i));
      qrels["q"][ids.back()] = static_cast<int>(rng() % 3);
    }
    std::shuffle(ids.begin(), ids.end(), rng);
    for (std::size_t i = 1; i < ids.size(); ++i) {
      if (qrels["q"][ids[i]] <= qrels["q"][ids[i - 1]]) continue;
      auto swapped = ids;
      std::swap(swapped[i], swapped[i - 1]);
      CHECK(ndcg_at_k({{"q", list_of("q", swapped)}}, qrels, 10).mean >=
            ndcg_at_k({{"q", list_of("q", ids)}}, qrels, 10).mean);
    }
  }
}

TEST_CASE("ensemble_search") {
  auto c = oracle::random_corpus(150, 4);
  auto a = DenseModel::initialize(512, 6, 1, 0.5);
  auto b = DenseModel::initialize(512, 6, 2, 0.5);
  auto ma = encode_corpus(a, c), mb = encode_corpus(b, c);

  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 20; ++trial) {
    auto q = oracle::random_text(rng, 4);
    const DenseModel* one[] = {&a};
    const PassageMatrix* one_m[] = {&ma};
    CHECK(ensemble_search(one, one_m, q, 20) == dense_search(a, ma, q, 20));

    const DenseModel* self[] = {&a, &a};
    const PassageMatrix* self_m[] = {&ma, &ma};
    auto doubled = ensemble_search(self, self_m, q, 150);
    auto single = dense_search(a, ma, q, 150);
    for (std::size_t i = 0; i < 150; ++i) {
      CHECK(doubled[i].ordinal == single[i].ordinal);
      CHECK(doubled[i].score == 2 * single[i].score);
    }

    const DenseModel* pair[] = {&a, &b};
    const PassageMatrix* pair_m[] = {&ma, &mb};
    auto both = ensemble_search(pair, pair_m, q, 10);
    for (const auto& h : both) {
      auto qa = encode(a, Side::Query, q), qb = encode(b, Side::Query, q);
      auto pa = encode(a, Side::Passage, c.indexed_text(h.ordinal));
      auto pb = encode(b, Side::Passage, c.indexed_text(h.ordinal));
      double s = 0;
      for (int d = 0; d < 6; ++d) s += qa[d] * pa[d] + qb[d] * pb[d];
      CHECK(std::abs(h.score - s) <= 1e-9);
    }
  }

  auto other = encode_corpus(b, oracle::random_corpus(150, 5));
  const DenseModel* pair[] = {&a, &b};
  const PassageMatrix* bad[] = {&ma, &other};
  CHECK_THROWS_AS(ensemble_search(pair, bad, "w1", 5), DataError);
  CHECK_THROWS_AS(ensemble_search({}, {}, "w1", 5), ConfigError);
}

TEST_CASE("ensemble of two-dimensional hand models") {
  // q-vecs [1,0],[0,1] and p-vecs [2,0],[0,3] give 2 + 3 = 5.
  Corpus c({{"p", "", "pp"}});
  auto a = DenseModel::initialize(8, 2, 1);
  auto b = DenseModel::initialize(8, 2, 1);
  std::fill(a.query_table.begin(), a.query_table.end(), 0.0f);
  std::fill(a.passage_table.begin(), a.passage_table.end(), 0.0f);
  b = a;
  auto qb = hash_token("qq", 8), pb = hash_token("pp", 8);
  a.query_table[qb * 2] = 1;
  a.passage_table[pb * 2] = 2;
  b.query_table[qb * 2 + 1] = 1;
  b.passage_table[pb * 2 + 1] = 3;
  auto ma = encode_corpus(a, c), mb = encode_corpus(b, c);
  const DenseModel* ms[] = {&a, &b};
  const PassageMatrix* mm[] = {&ma, &mb};
  CHECK(ensemble_search(ms, mm, "qq", 1)[0].score == 5.0);
}

TEST_CASE("run files") {
  Run run{{"q1", {"q1", {{"d1", 1.5, 1}, {"d2", 0.1234567, 2}}}}};
  std::ostringstream out;
  write_run(run, out, "tag");
  CHECK(out.str() == "q1 Q0 d1 1 1.500000 tag\nq1 Q0 d2 2 0.123457 tag\n");
  std::istringstream in(out.str());
  auto back = read_run(in);
  CHECK(back.at("q1").entries[0] == RankedEntry{"d1", 1.5, 1});
  CHECK(back.at("q1").entries[1].score == 0.123457);

  std::ostringstream empty;
  write_run(Run{}, empty, "x");
  CHECK(empty.str().empty());

  std::istringstream bad("q1 Q0 d1 notarank 1.0 t\n");
  CHECK_THROWS_AS(read_run(bad), DataError);

  std::mt19937_64 rng(2);
  Run big;
  for (int q = 0; q < 10; ++q) {
    std::string qid = "q" + std::to_string(q);
    RankedList l{qid, {}};
    double s = 10;
    for (int i = 0; i < 20; ++i) {
      s -= static_cast<double>(rng() % 1000) / 1000.0;
      char buf[32];
      std::snprintf(buf, sizeof buf, "%.6f", s);
      l.entries.push_back({"d" + std::to_string(rng() % 1000) + "_" + std::to_string(i), std::stod(buf),
                           static_cast<std::size_t>(i + 1)});
    }
    big[qid] = l;
  }
  auto path = std::filesystem::temp_directory_path() / "altboot_run.trec";
  write_run(big, path, "x");
  CHECK(read_run(path) == big);
  std::filesystem::remove(path);
}
