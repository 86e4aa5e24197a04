#include "altboot/bm25.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <unordered_set>

#include "altboot/binary_io.hpp"
#include "altboot/error.hpp"

namespace altboot {

namespace {

constexpr std::string_view kMagic = "ABIX1";
constexpr std::uint32_t kVersion = 1;
const std::vector<Bm25Index::Posting> kNoPostings;

// Unique terms in first-occurrence order.
std::vector<std::string_view> unique_terms(const TokenSeq& query) {
  std::vector<std::string_view> out;
  std::unordered_set<std::string_view> seen;
  for (const auto& t : query) {
    if (seen.insert(t).second) out.push_back(t);
  }
  return out;
}

}  // namespace

void Bm25Params::validate() const {
  if (!(k1 > 0.0)) throw ConfigError("bm25: k1 must be > 0");
  if (!(b >= 0.0 && b <= 1.0)) throw ConfigError("bm25: b must lie in [0, 1]");
}

Bm25Index Bm25Index::build(const Corpus& corpus, const Bm25Params& params, bool include_title) {
  params.validate();
  if (corpus.empty()) throw DataError("bm25: cannot index an empty corpus");
  Bm25Index index;
  index.params_ = params;
  index.include_title_ = include_title;
  std::map<std::string, std::vector<Posting>> inverted;
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    auto tokens = tokenize(corpus.indexed_text(i, include_title));
    std::map<std::string_view, std::uint32_t> counts;
    for (const auto& t : tokens) ++counts[t];
    for (const auto& [term, tf] : counts) {
      inverted[std::string(term)].push_back(Posting{static_cast<std::uint32_t>(i), tf});
    }
    index.passage_ids_.push_back(corpus[i].id);
    index.doc_lengths_.push_back(static_cast<std::uint32_t>(tokens.size()));
  }
  for (auto& [term, postings] : inverted) {
    index.terms_.push_back(term);
    index.postings_.push_back(std::move(postings));
  }
  index.finalize();
  return index;
}

void Bm25Index::finalize() {
  double total = 0.0;
  for (auto len : doc_lengths_) total += len;
  avgdl_ = doc_lengths_.empty() ? 0.0 : total / static_cast<double>(doc_lengths_.size());
  term_ids_.clear();
  term_ids_.reserve(terms_.size());
  for (std::size_t i = 0; i < terms_.size(); ++i) {
    term_ids_.emplace(terms_[i], static_cast<std::uint32_t>(i));
  }
}

const std::vector<Bm25Index::Posting>& Bm25Index::postings(std::string_view term) const {
  auto it = term_ids_.find(std::string(term));
  return it == term_ids_.end() ? kNoPostings : postings_[it->second];
}

std::size_t Bm25Index::document_frequency(std::string_view term) const {
  return postings(term).size();
}

std::uint32_t Bm25Index::term_frequency(std::string_view term, std::size_t ordinal) const {
  const auto& list = postings(term);
  auto it = std::lower_bound(list.begin(), list.end(), ordinal,
                             [](const Posting& p, std::size_t o) { return p.ordinal < o; });
  return it != list.end() && it->ordinal == ordinal ? it->tf : 0;
}

double Bm25Index::idf(std::string_view term) const {
  auto n = static_cast<double>(size());
  auto df = static_cast<double>(document_frequency(term));
  return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

double Bm25Index::term_weight(double idf, std::uint32_t tf, std::uint32_t length) const {
  const double f = tf;
  const double norm = 1.0 - params_.b + params_.b * static_cast<double>(length) / avgdl_;
  return idf * f * (params_.k1 + 1.0) / (f + params_.k1 * norm);
}

double Bm25Index::score(const TokenSeq& query, std::size_t ordinal) const {
  if (ordinal >= size()) throw DataError("bm25: passage ordinal out of range");
  double total = 0.0;
  for (auto term : unique_terms(query)) {
    auto tf = term_frequency(term, ordinal);
    if (tf == 0) continue;
    total += term_weight(idf(term), tf, doc_lengths_[ordinal]);
  }
  return total;
}

double Bm25Index::score(const TokenSeq& query, std::string_view passage_id) const {
  auto it = std::find(passage_ids_.begin(), passage_ids_.end(), passage_id);
  if (it == passage_ids_.end()) {
    throw DataError("bm25: unknown passage id \"" + std::string(passage_id) + "\"");
  }
  return score(query, static_cast<std::size_t>(it - passage_ids_.begin()));
}

std::vector<Hit> Bm25Index::search_hits(const TokenSeq& query, std::size_t k) const {
  if (k == 0) throw ConfigError("bm25: k must be >= 1");
  std::vector<double> acc(size(), 0.0);
  std::vector<std::uint32_t> touched;
  std::vector<bool> seen(size(), false);
  for (auto term : unique_terms(query)) {
    const auto& list = postings(term);
    if (list.empty()) continue;
    const double w = idf(term);
    for (const auto& p : list) {
      acc[p.ordinal] += term_weight(w, p.tf, doc_lengths_[p.ordinal]);
      if (!seen[p.ordinal]) {
        seen[p.ordinal] = true;
        touched.push_back(p.ordinal);
      }
    }
  }
  std::vector<Hit> hits;
  hits.reserve(touched.size());
  for (auto o : touched) hits.push_back(Hit{o, acc[o]});
  k = std::min(k, hits.size());
  std::partial_sort(hits.begin(), hits.begin() + static_cast<std::ptrdiff_t>(k), hits.end(),
                    hit_before);
  hits.resize(k);
  return hits;
}

RankedList Bm25Index::search(std::string_view query_text, std::size_t k,
                             std::string query_id) const {
  auto hits = search_hits(tokenize(query_text), k);
  RankedList list{std::move(query_id), {}};
  for (std::size_t i = 0; i < hits.size(); ++i) {
    list.entries.push_back(RankedEntry{passage_ids_[hits[i].ordinal], hits[i].score, i + 1});
  }
  return list;
}

// Layout (little-endian):
//   "ABIX1" u32 version f64 k1 f64 b u8 include_title
//   u64 N, then N x (u32 id_len, id bytes, u32 doc_length)
//   u64 T, then T x (u32 term_len, term bytes, u32 count, count x (u32 ordinal, u32 tf))
void Bm25Index::write(std::ostream& out) const {
  out.write(kMagic.data(), static_cast<std::streamsize>(kMagic.size()));
  binio::write<std::uint32_t>(out, kVersion);
  binio::write<double>(out, params_.k1);
  binio::write<double>(out, params_.b);
  binio::write<std::uint8_t>(out, include_title_ ? 1 : 0);
  binio::write<std::uint64_t>(out, passage_ids_.size());
  for (std::size_t i = 0; i < passage_ids_.size(); ++i) {
    binio::write_string(out, passage_ids_[i]);
    binio::write<std::uint32_t>(out, doc_lengths_[i]);
  }
  binio::write<std::uint64_t>(out, terms_.size());
  for (std::size_t t = 0; t < terms_.size(); ++t) {
    binio::write_string(out, terms_[t]);
    binio::write<std::uint32_t>(out, static_cast<std::uint32_t>(postings_[t].size()));
    for (const auto& p : postings_[t]) {
      binio::write<std::uint32_t>(out, p.ordinal);
      binio::write<std::uint32_t>(out, p.tf);
    }
  }
}

Bm25Index Bm25Index::read(std::istream& in) {
  constexpr std::string_view what = "bm25 index";
  binio::expect_magic(in, kMagic, what);
  if (auto v = binio::read<std::uint32_t>(in, what); v != kVersion) {
    throw DataError("bm25 index: unsupported version " + std::to_string(v));
  }
  Bm25Index index;
  index.params_.k1 = binio::read<double>(in, what);
  index.params_.b = binio::read<double>(in, what);
  index.params_.validate();
  index.include_title_ = binio::read<std::uint8_t>(in, what) != 0;
  auto n = binio::read<std::uint64_t>(in, what);
  for (std::uint64_t i = 0; i < n; ++i) {
    index.passage_ids_.push_back(binio::read_string(in, what));
    index.doc_lengths_.push_back(binio::read<std::uint32_t>(in, what));
  }
  auto terms = binio::read<std::uint64_t>(in, what);
  for (std::uint64_t t = 0; t < terms; ++t) {
    index.terms_.push_back(binio::read_string(in, what));
    if (t > 0 && !(index.terms_[t - 1] < index.terms_[t])) {
      throw DataError("bm25 index: terms not strictly sorted");
    }
    auto count = binio::read<std::uint32_t>(in, what);
    std::vector<Posting> list(count);
    for (auto& p : list) {
      p.ordinal = binio::read<std::uint32_t>(in, what);
      p.tf = binio::read<std::uint32_t>(in, what);
      if (p.ordinal >= n) throw DataError("bm25 index: posting ordinal out of range");
    }
    index.postings_.push_back(std::move(list));
  }
  binio::expect_end(in, what);
  index.finalize();
  return index;
}

void Bm25Index::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  write(out);
}

Bm25Index Bm25Index::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return read(in);
}

}  // namespace altboot
