#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace altboot {

struct Passage {
  std::string id;
  std::string title;
  std::string text;

  bool operator==(const Passage&) const = default;
};

/// Immutable, id-indexed passage collection in file order. Ordinals are the
/// positions in that order and serve as the tie-break key everywhere.
class Corpus {
 public:
  Corpus() = default;
  /// Throws DataError on an empty id, blank text, or a duplicate id.
  explicit Corpus(std::vector<Passage> passages);

  std::size_t size() const { return passages_.size(); }
  bool empty() const { return passages_.empty(); }
  const Passage& operator[](std::size_t ordinal) const { return passages_[ordinal]; }
  std::span<const Passage> passages() const { return passages_; }

  std::optional<std::size_t> find(std::string_view id) const;
  /// Like find() but throws DataError for unknown ids.
  std::size_t ordinal(std::string_view id) const;

  /// Text fed to indexes and encoders: "title text" when the title is
  /// non-empty and include_title is set, otherwise just the text.
  std::string indexed_text(std::size_t ordinal, bool include_title = true) const;

  /// FNV-1a over ids, titles and texts; identifies a corpus in cache keys.
  std::uint64_t checksum() const;

  bool operator==(const Corpus& other) const { return passages_ == other.passages_; }

 private:
  std::vector<Passage> passages_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// A query. For sentence-cropped queries source_passage_id names the passage
/// the sentence was cut from; it is empty for externally supplied queries.
struct Query {
  std::string id;
  std::string text;
  std::string source_passage_id;

  bool operator==(const Query&) const = default;
};

class QuerySet {
 public:
  QuerySet() = default;
  explicit QuerySet(std::vector<Query> queries);

  std::size_t size() const { return queries_.size(); }
  bool empty() const { return queries_.empty(); }
  const Query& operator[](std::size_t i) const { return queries_[i]; }
  std::span<const Query> queries() const { return queries_; }
  std::optional<std::size_t> find(std::string_view id) const;

  bool operator==(const QuerySet& other) const { return queries_ == other.queries_; }

 private:
  std::vector<Query> queries_;
  std::unordered_map<std::string, std::size_t> by_id_;
};

/// query id -> passage id -> non-negative grade. Ordered maps keep every
/// traversal deterministic.
using Qrels = std::map<std::string, std::map<std::string, int>>;

Corpus parse_corpus(std::istream& in);
Corpus load_corpus(const std::filesystem::path& path);
void write_corpus(const Corpus& corpus, std::ostream& out);
void save_corpus(const Corpus& corpus, const std::filesystem::path& path);

QuerySet parse_queries(std::istream& in);
QuerySet load_queries(const std::filesystem::path& path);
void write_queries(const QuerySet& queries, std::ostream& out);
void save_queries(const QuerySet& queries, const std::filesystem::path& path);

Qrels parse_qrels(std::istream& in);
Qrels load_qrels(const std::filesystem::path& path);
void write_qrels(const Qrels& qrels, std::ostream& out);
void save_qrels(const Qrels& qrels, const std::filesystem::path& path);

/// Reports qrels entries whose query or passage id is unknown. Empty when
/// everything resolves.
std::vector<std::string> check_qrels(const Qrels& qrels, const QuerySet& queries,
                                     const Corpus& corpus);

/// Splits on '.', '!' or '?' when followed by whitespace or end of text,
/// trims each piece and drops pieces with fewer than min_tokens tokens.
std::vector<std::string> split_sentences(std::string_view text, std::size_t min_tokens = 3);

struct CropOptions {
  std::size_t cap = 2'000'000;
  std::uint64_t seed = 0;
  std::size_t min_tokens = 3;
};

/// Turns every sentence of every passage text into a query with id
/// "<passage id>#<sentence index>". When more sentences exist than cap, a
/// uniform sample of cap sentences is kept in corpus order.
QuerySet crop_queries(const Corpus& corpus, const CropOptions& options);

}  // namespace altboot
