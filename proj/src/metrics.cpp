#include "altboot/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "altboot/error.hpp"
#include "altboot/math.hpp"

namespace altboot {

namespace {

template <class PerQuery>
Report evaluate(const Run& run, const Qrels& qrels, std::size_t k, std::string metric,
                PerQuery&& per_query) {
  if (k < 1) throw ConfigError(metric + ": k must be >= 1");
  Report report;
  report.metric = std::move(metric);
  report.k = k;
  double total = 0.0;
  for (const auto& [qid, list] : run) {
    auto judged = qrels.find(qid);
    if (judged == qrels.end()) {
      ++report.excluded;
      continue;
    }
    const double value = per_query(list, judged->second);
    report.per_query[qid] = value;
    total += value;
  }
  report.n = report.per_query.size();
  report.mean = report.n ? total / static_cast<double>(report.n) : 0.0;
  return report;
}

int grade_of(const std::map<std::string, int>& grades, const std::string& pid) {
  auto it = grades.find(pid);
  return it == grades.end() ? 0 : it->second;
}

}  // namespace

std::string Report::to_json() const {
  nlohmann::ordered_json j;
  j["metric"] = metric;
  j["k"] = k;
  j["per_query"] = nlohmann::ordered_json::object();
  for (const auto& [q, v] : per_query) j["per_query"][q] = v;
  j["mean"] = mean;
  j["n"] = n;
  j["excluded"] = excluded;
  return j.dump();
}

Report ndcg_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
  return evaluate(run, qrels, k, "ndcg", [k](const RankedList& list, const auto& grades) {
    double dcg = 0.0;
    const std::size_t depth = std::min(k, list.size());
    for (std::size_t i = 0; i < depth; ++i) {
      const int rel = grade_of(grades, list.entries[i].passage_id);
      if (rel > 0) dcg += (std::exp2(rel) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    std::vector<int> ideal;
    for (const auto& [pid, g] : grades) ideal.push_back(g);
    std::sort(ideal.begin(), ideal.end(), std::greater<>());
    double idcg = 0.0;
    for (std::size_t i = 0; i < std::min(k, ideal.size()); ++i) {
      if (ideal[i] > 0) idcg += (std::exp2(ideal[i]) - 1.0) / std::log2(static_cast<double>(i) + 2.0);
    }
    return idcg > 0.0 ? dcg / idcg : 0.0;
  });
}

Report recall_at_k(const Run& run, const Qrels& qrels, std::size_t k) {
  return evaluate(run, qrels, k, "recall", [k](const RankedList& list, const auto& grades) {
    std::size_t relevant = 0;
    for (const auto& [pid, g] : grades) relevant += g > 0;
    if (relevant == 0) return 0.0;
    std::size_t found = 0;
    for (std::size_t i = 0; i < std::min(k, list.size()); ++i) {
      found += grade_of(grades, list.entries[i].passage_id) > 0;
    }
    return static_cast<double>(found) / static_cast<double>(relevant);
  });
}

Report topk_accuracy(const Run& run, const Qrels& qrels, std::size_t k) {
  return evaluate(run, qrels, k, "accuracy", [k](const RankedList& list, const auto& grades) {
    for (std::size_t i = 0; i < std::min(k, list.size()); ++i) {
      if (grade_of(grades, list.entries[i].passage_id) > 0) return 1.0;
    }
    return 0.0;
  });
}

std::vector<Hit> ensemble_search(std::span<const DenseModel* const> models,
                                 std::span<const PassageMatrix* const> matrices,
                                 std::string_view query, std::size_t k) {
  if (models.empty()) throw ConfigError("ensemble: need at least one model");
  if (models.size() != matrices.size()) throw ConfigError("ensemble: one passage matrix per model");
  if (k < 1) throw ConfigError("ensemble: k must be >= 1");
  const auto rows = matrices[0]->rows();
  const auto corpus_key = matrices[0]->corpus_checksum;
  for (std::size_t m = 0; m < models.size(); ++m) {
    if (matrices[m]->rows() != rows || matrices[m]->corpus_checksum != corpus_key) {
      throw DataError("ensemble: passage matrices were built over different corpora");
    }
    if (matrices[m]->dim != models[m]->dim) throw DataError("ensemble: model/matrix dim mismatch");
  }
  std::vector<double> scores(rows, 0.0);
  for (std::size_t m = 0; m < models.size(); ++m) {
    auto q = encode(*models[m], Side::Query, query);
    for (std::size_t i = 0; i < rows; ++i) scores[i] += dot(q, matrices[m]->row(i));
  }
  return top_k(scores, k);
}

void write_run(const Run& run, std::ostream& out, const std::string& tag) {
  char buf[64];
  for (const auto& [qid, list] : run) {
    for (const auto& e : list.entries) {
      std::snprintf(buf, sizeof buf, "%.6f", e.score);
      out << qid << " Q0 " << e.passage_id << ' ' << e.rank << ' ' << buf << ' ' << tag << '\n';
    }
  }
}

void write_run(const Run& run, const std::filesystem::path& path, const std::string& tag) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  write_run(run, out, tag);
}

Run read_run(std::istream& in) {
  Run run;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string qid, q0, pid, tag;
    std::size_t rank = 0;
    double score = 0.0;
    if (!(fields >> qid >> q0 >> pid >> rank >> score >> tag)) {
      throw DataError("run file: malformed line " + std::to_string(line_no));
    }
    auto& list = run[qid];
    list.query_id = qid;
    list.entries.push_back(RankedEntry{pid, score, rank});
  }
  for (auto& [qid, list] : run) {
    std::stable_sort(list.entries.begin(), list.entries.end(),
                     [](const RankedEntry& a, const RankedEntry& b) { return a.rank < b.rank; });
  }
  return run;
}

Run read_run(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return read_run(in);
}

}  // namespace altboot
