#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>

#include "altboot/bm25.hpp"
#include "altboot/bootstrap.hpp"
#include "altboot/corpus.hpp"
#include "altboot/dense.hpp"
#include "altboot/error.hpp"
#include "altboot/metrics.hpp"
#include "altboot/rerank.hpp"
#include "altboot/synthetic.hpp"
#include "altboot/text.hpp"

namespace py = pybind11;
using namespace altboot;

namespace {

using Pairs = std::vector<std::pair<std::string, double>>;

Pairs pairs_of(const RankedList& list) {
  Pairs out;
  for (const auto& e : list.entries) out.emplace_back(e.passage_id, e.score);
  return out;
}

RankedList list_of(const std::string& qid, const Pairs& pairs) {
  RankedList l{qid, {}};
  for (std::size_t i = 0; i < pairs.size(); ++i) l.entries.push_back({pairs[i].first, pairs[i].second, i + 1});
  return l;
}

Run run_of(const std::map<std::string, Pairs>& run) {
  Run out;
  for (const auto& [qid, pairs] : run) out[qid] = list_of(qid, pairs);
  return out;
}

py::dict report_dict(const Report& r) {
  py::dict d;
  d["metric"] = r.metric;
  d["k"] = r.k;
  d["mean"] = r.mean;
  d["n"] = r.n;
  d["excluded"] = r.excluded;
  d["per_query"] = r.per_query;
  return d;
}

py::list trace_list(const BootstrapState& s) {
  py::list out;
  for (const auto& rec : s.trace) {
    py::dict d;
    d["t"] = rec.t;
    d["retriever_ndcg@10"] = rec.retriever_metric;
    d["reranker_ndcg@10"] = rec.reranker_metric;
    d["retriever_init_checksum"] = rec.retriever_init_checksum;
    d["retriever_checksum"] = rec.retriever_checksum;
    d["reranker_init_checksum"] = rec.reranker_init_checksum;
    d["reranker_checksum"] = rec.reranker_checksum;
    d["examples"] = rec.examples;
    out.append(d);
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_altboot, m) {
  m.doc() = "Alternating retriever/reranker bootstrapping (C++ core)";

  auto base = py::register_exception<Error>(m, "Error");
  py::register_exception<ConfigError>(m, "ConfigError", base.ptr());
  py::register_exception<DataError>(m, "DataError", base.ptr());
  py::register_exception<RuntimeFailure>(m, "RuntimeFailure", base.ptr());

  m.def("tokenize", [](const std::string& s) { return tokenize(s); });
  m.def("derive_seed", py::overload_cast<std::uint64_t, std::string_view>(&derive_seed));
  m.def(
      "corrupt",
      [](TokenSeq tokens, double rate, std::uint64_t seed, const std::string& mask) {
        NoiseConfig cfg;
        cfg.rate = rate;
        cfg.seed = seed;
        cfg.mask_symbol = mask;
        return corrupt(std::move(tokens), cfg);
      },
      py::arg("tokens"), py::arg("rate") = 0.1, py::arg("seed") = 0, py::arg("mask_symbol") = "__mask__");

  py::class_<Passage>(m, "Passage")
      .def(py::init<std::string, std::string, std::string>(), py::arg("id"), py::arg("title") = "",
           py::arg("text") = "")
      .def_readwrite("id", &Passage::id)
      .def_readwrite("title", &Passage::title)
      .def_readwrite("text", &Passage::text);

  py::class_<Corpus>(m, "Corpus")
      .def(py::init<std::vector<Passage>>())
      .def("__len__", &Corpus::size)
      .def("__getitem__", [](const Corpus& c, std::size_t i) {
        if (i >= c.size()) throw py::index_error();
        return c[i];
      })
      .def("ordinal", &Corpus::ordinal)
      .def("indexed_text", &Corpus::indexed_text, py::arg("ordinal"), py::arg("include_title") = true)
      .def("checksum", &Corpus::checksum)
      .def("save", [](const Corpus& c, const std::filesystem::path& p) { save_corpus(c, p); });

  py::class_<Query>(m, "Query")
      .def(py::init<std::string, std::string, std::string>(), py::arg("id"), py::arg("text"),
           py::arg("source_passage_id") = "")
      .def_readwrite("id", &Query::id)
      .def_readwrite("text", &Query::text)
      .def_readwrite("source_passage_id", &Query::source_passage_id);

  py::class_<QuerySet>(m, "QuerySet")
      .def(py::init<std::vector<Query>>())
      .def("__len__", &QuerySet::size)
      .def("__getitem__", [](const QuerySet& q, std::size_t i) {
        if (i >= q.size()) throw py::index_error();
        return q[i];
      })
      .def("save", [](const QuerySet& q, const std::filesystem::path& p) { save_queries(q, p); });

  m.def("load_corpus", &load_corpus);
  m.def("load_queries", &load_queries);
  m.def("load_qrels", &load_qrels);
  m.def("crop_queries", [](const Corpus& c, std::size_t cap, std::uint64_t seed, std::size_t min_tokens) {
    return crop_queries(c, {.cap = cap, .seed = seed, .min_tokens = min_tokens});
  }, py::arg("corpus"), py::arg("cap") = 2'000'000, py::arg("seed") = 0, py::arg("min_tokens") = 3);

  py::class_<Bm25Index>(m, "Bm25Index")
      .def_static(
          "build",
          [](const Corpus& c, double k1, double b, bool include_title) {
            return Bm25Index::build(c, {k1, b}, include_title);
          },
          py::arg("corpus"), py::arg("k1") = 1.2, py::arg("b") = 0.75, py::arg("include_title") = true)
      .def_static("load", &Bm25Index::load)
      .def("save", &Bm25Index::save)
      .def("__len__", &Bm25Index::size)
      .def_property_readonly("avgdl", &Bm25Index::avgdl)
      .def("idf", &Bm25Index::idf)
      .def("search", [](const Bm25Index& idx, const std::string& q, std::size_t k) {
        return pairs_of(idx.search(q, k));
      }, py::arg("query"), py::arg("k") = 100);

  py::class_<DenseModel>(m, "DenseModel")
      .def_static("initialize", &DenseModel::initialize, py::arg("buckets"), py::arg("dim"), py::arg("seed"),
                  py::arg("sigma") = 0.02)
      .def_static("load", &load_dense_checkpoint)
      .def("save", [](const DenseModel& d, const std::filesystem::path& p) { save_checkpoint(d, p); })
      .def_readonly("buckets", &DenseModel::buckets)
      .def_readonly("dim", &DenseModel::dim)
      .def("checksum", &DenseModel::checksum)
      .def("encode_query", [](const DenseModel& d, const std::string& s) { return encode(d, Side::Query, s); })
      .def("encode_passage", [](const DenseModel& d, const std::string& s) { return encode(d, Side::Passage, s); });

  py::class_<PassageMatrix>(m, "PassageMatrix")
      .def_property_readonly("rows", &PassageMatrix::rows)
      .def_readonly("dim", &PassageMatrix::dim);
  m.def("encode_corpus", &encode_corpus, py::arg("model"), py::arg("corpus"), py::arg("threads") = 1,
        py::arg("include_title") = true);
  m.def(
      "dense_search",
      [](const DenseModel& d, const PassageMatrix& pm, const Corpus& c, const std::string& q, std::size_t k) {
        return pairs_of(to_ranked_list("", dense_search(d, pm, q, k), c));
      },
      py::arg("model"), py::arg("matrix"), py::arg("corpus"), py::arg("query"), py::arg("k") = 100);
  m.def(
      "ensemble_search",
      [](const std::vector<const DenseModel*>& models, const std::vector<const PassageMatrix*>& mats,
         const Corpus& c, const std::string& q, std::size_t k) {
        return pairs_of(to_ranked_list("", ensemble_search(models, mats, q, k), c));
      },
      py::arg("models"), py::arg("matrices"), py::arg("corpus"), py::arg("query"), py::arg("k") = 100);

  py::class_<RerankModel>(m, "RerankModel")
      .def_static("load", &load_rerank_checkpoint)
      .def("save", [](const RerankModel& r, const std::filesystem::path& p) { save_checkpoint(r, p); })
      .def("checksum", &RerankModel::checksum)
      .def("score", [](const RerankModel& r, const std::string& q, const std::string& p) {
        return rerank_score(r, q, p);
      });

  m.def(
      "extract_labels",
      [](const std::vector<std::string>& ranked, std::size_t k, std::size_t k_pos, std::size_t k_neg) {
        RankedList l{"q", {}};
        for (std::size_t i = 0; i < ranked.size(); ++i) l.entries.push_back({ranked[i], 0.0, i + 1});
        auto ex = extract_labels(l, {k, k_pos, k_neg});
        return std::make_pair(ex.positives, ex.negatives);
      },
      py::arg("ranked_ids"), py::arg("k") = 50, py::arg("k_pos") = 10, py::arg("k_neg") = 5);

  m.def("ndcg_at_k", [](const std::map<std::string, Pairs>& run, const Qrels& q, std::size_t k) {
    return report_dict(ndcg_at_k(run_of(run), q, k));
  }, py::arg("run"), py::arg("qrels"), py::arg("k") = 10);
  m.def("recall_at_k", [](const std::map<std::string, Pairs>& run, const Qrels& q, std::size_t k) {
    return report_dict(recall_at_k(run_of(run), q, k));
  }, py::arg("run"), py::arg("qrels"), py::arg("k") = 100);

  py::class_<SyntheticWorld>(m, "SyntheticWorld")
      .def_readonly("corpus", &SyntheticWorld::corpus)
      .def_readonly("train_queries", &SyntheticWorld::train_queries)
      .def_readonly("validation_queries", &SyntheticWorld::validation_queries)
      .def_readonly("validation_qrels", &SyntheticWorld::validation_qrels);
  m.def(
      "make_world",
      [](std::size_t passages, std::size_t topics, std::size_t train_queries, std::size_t validation_queries,
         std::uint64_t seed) {
        WorldConfig w;
        w.passages = passages;
        w.topics = topics;
        w.train_queries = train_queries;
        w.validation_queries = validation_queries;
        w.seed = seed;
        return make_world(w);
      },
      py::arg("passages") = 3000, py::arg("topics") = 60, py::arg("train_queries") = 500,
      py::arg("validation_queries") = 200, py::arg("seed") = 20240601);

  py::class_<BootstrapConfig>(m, "BootstrapConfig")
      .def(py::init<>())
      .def_readwrite("seed", &BootstrapConfig::seed)
      .def_readwrite("buckets", &BootstrapConfig::buckets)
      .def_readwrite("dim", &BootstrapConfig::dim)
      .def_readwrite("threads", &BootstrapConfig::threads)
      .def_readwrite("retrieve_k", &BootstrapConfig::retrieve_k)
      .def_readwrite("rerank_depth", &BootstrapConfig::rerank_depth)
      .def_readwrite("self_supervision", &BootstrapConfig::self_supervision)
      .def_property(
          "artifacts_dir", [](const BootstrapConfig& c) { return c.artifacts_dir; },
          [](BootstrapConfig& c, const std::filesystem::path& p) { c.artifacts_dir = p; })
      .def_property(
          "retriever_epochs", [](const BootstrapConfig& c) { return c.retriever.epochs; },
          [](BootstrapConfig& c, std::size_t v) { c.retriever.epochs = v; })
      .def_property(
          "retriever_lr", [](const BootstrapConfig& c) { return c.retriever.learning_rate; },
          [](BootstrapConfig& c, double v) { c.retriever.learning_rate = v; })
      .def_property(
          "reranker_epochs", [](const BootstrapConfig& c) { return c.reranker.epochs; },
          [](BootstrapConfig& c, std::size_t v) { c.reranker.epochs = v; })
      .def_property(
          "reranker_lr", [](const BootstrapConfig& c) { return c.reranker.learning_rate; },
          [](BootstrapConfig& c, double v) { c.reranker.learning_rate = v; })
      .def_property(
          "reranker_hidden", [](const BootstrapConfig& c) { return c.reranker.hidden; },
          [](BootstrapConfig& c, std::uint32_t v) { c.reranker.hidden = v; });

  py::class_<BootstrapState>(m, "BootstrapState")
      .def_readonly("t", &BootstrapState::t)
      .def_readonly("warmup", &BootstrapState::warmup)
      .def_readonly("retriever", &BootstrapState::retriever)
      .def_readonly("reranker", &BootstrapState::reranker)
      .def_property_readonly("trace", &trace_list)
      .def("trace_json", [](const BootstrapState& s) { return trace_json(s); });

  // The reranker config follows the retriever's width, as in the CLI.
  auto sync = [](BootstrapConfig c) {
    c.reranker.dim = c.dim;
    c.reranker.buckets = c.buckets;
    return c;
  };
  m.def(
      "warmup",
      [sync](const Corpus& c, const QuerySet& q, const BootstrapConfig& cfg, const QuerySet* vq,
             const std::optional<Qrels>& qrels) {
        Validation v{vq, qrels ? &*qrels : nullptr, 10};
        py::gil_scoped_release release;
        return warmup(c, q, sync(cfg), vq && qrels ? &v : nullptr);
      },
      py::arg("corpus"), py::arg("queries"), py::arg("config"), py::arg("validation_queries") = nullptr,
      py::arg("qrels") = nullptr);
  m.def(
      "iterate",
      [sync](BootstrapState s, std::size_t T, const Corpus& c, const QuerySet& q, const BootstrapConfig& cfg,
             const QuerySet* vq, const std::optional<Qrels>& qrels) {
        Validation v{vq, qrels ? &*qrels : nullptr, 10};
        py::gil_scoped_release release;
        return iterate(std::move(s), T, c, q, sync(cfg), vq && qrels ? &v : nullptr);
      },
      py::arg("state"), py::arg("T"), py::arg("corpus"), py::arg("queries"), py::arg("config"),
      py::arg("validation_queries") = nullptr, py::arg("qrels") = nullptr);
  m.def("load_state", &load_state);
}
