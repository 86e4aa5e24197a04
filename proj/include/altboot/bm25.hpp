#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "altboot/corpus.hpp"
#include "altboot/ranking.hpp"
#include "altboot/text.hpp"

namespace altboot {

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;

  void validate() const;
};

/// Okapi BM25 over an exact-term inverted index.
///
///   score(q, p) = sum over unique t in q of
///                 idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * |p| / avgdl))
///   idf(t)      = ln(1 + (N - df + 0.5) / (df + 0.5))
///
/// The +1 inside the log keeps idf positive, so every passage sharing a term
/// with the query scores above zero and nothing else is returned.
class Bm25Index {
 public:
  struct Posting {
    std::uint32_t ordinal;
    std::uint32_t tf;
  };

  static Bm25Index build(const Corpus& corpus, const Bm25Params& params = {},
                         bool include_title = true);

  const Bm25Params& params() const { return params_; }
  std::size_t size() const { return doc_lengths_.size(); }
  double avgdl() const { return avgdl_; }
  std::size_t vocabulary_size() const { return terms_.size(); }
  std::uint32_t doc_length(std::size_t ordinal) const { return doc_lengths_.at(ordinal); }
  const std::string& passage_id(std::size_t ordinal) const { return passage_ids_.at(ordinal); }

  std::size_t document_frequency(std::string_view term) const;
  std::uint32_t term_frequency(std::string_view term, std::size_t ordinal) const;
  double idf(std::string_view term) const;
  /// Postings of a term sorted by ordinal; empty for unknown terms.
  const std::vector<Posting>& postings(std::string_view term) const;

  double score(const TokenSeq& query, std::size_t ordinal) const;
  /// Throws DataError for an unknown passage id.
  double score(const TokenSeq& query, std::string_view passage_id) const;

  /// Top-k passages with positive score, by (score desc, ordinal asc).
  std::vector<Hit> search_hits(const TokenSeq& query, std::size_t k) const;
  RankedList search(std::string_view query_text, std::size_t k, std::string query_id = {}) const;

  void write(std::ostream& out) const;
  static Bm25Index read(std::istream& in);
  void save(const std::filesystem::path& path) const;
  static Bm25Index load(const std::filesystem::path& path);

 private:
  double term_weight(double idf, std::uint32_t tf, std::uint32_t length) const;
  void finalize();

  Bm25Params params_;
  bool include_title_ = true;
  std::vector<std::string> passage_ids_;
  std::vector<std::uint32_t> doc_lengths_;
  double avgdl_ = 0.0;
  std::vector<std::string> terms_;  // sorted
  std::vector<std::vector<Posting>> postings_;
  std::unordered_map<std::string, std::uint32_t> term_ids_;
};

}  // namespace altboot
