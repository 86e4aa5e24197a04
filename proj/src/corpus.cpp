#include "altboot/corpus.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <random>
#include <sstream>

#include <json.hpp>

#include "altboot/error.hpp"
#include "altboot/text.hpp"

namespace altboot {

namespace {

using nlohmann::json;

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) {
    return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v';
  };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

std::ifstream open_input(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_output(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw RuntimeFailure("cannot write " + path.string());
  return out;
}

// Calls fn(line_number, json_object) for each non-blank line.
template <class Fn>
void for_each_json_line(std::istream& in, const char* what, Fn&& fn) {
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    json obj;
    try {
      obj = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(std::string(what) + ": malformed JSON on line " +
                      std::to_string(line_no) + ": " + e.what());
    }
    if (!obj.is_object()) {
      throw DataError(std::string(what) + ": line " + std::to_string(line_no) +
                      " is not a JSON object");
    }
    fn(line_no, obj);
  }
}

std::string required_string(const json& obj, const char* key, const char* what,
                            std::size_t line_no) {
  auto it = obj.find(key);
  if (it == obj.end() || !it->is_string()) {
    throw DataError(std::string(what) + ": line " + std::to_string(line_no) +
                    " lacks string field \"" + key + "\"");
  }
  return it->get<std::string>();
}

std::string optional_string(const json& obj, const char* key) {
  auto it = obj.find(key);
  if (it == obj.end() || it->is_null()) return {};
  if (!it->is_string()) throw DataError(std::string("field \"") + key + "\" must be a string");
  return it->get<std::string>();
}

std::vector<std::string_view> split_tabs(std::string_view line) {
  std::vector<std::string_view> cols;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    cols.push_back(line.substr(start, tab == std::string_view::npos ? tab : tab - start));
    if (tab == std::string_view::npos) break;
    start = tab + 1;
  }
  return cols;
}

}  // namespace

// ---- Corpus ---------------------------------------------------------------

Corpus::Corpus(std::vector<Passage> passages) : passages_(std::move(passages)) {
  by_id_.reserve(passages_.size());
  for (std::size_t i = 0; i < passages_.size(); ++i) {
    const auto& p = passages_[i];
    if (p.id.empty()) throw DataError("passage " + std::to_string(i) + " has an empty id");
    if (trim(p.text).empty()) throw DataError("passage \"" + p.id + "\" has empty text");
    if (!by_id_.emplace(p.id, i).second) {
      throw DataError("duplicate passage id \"" + p.id + "\"");
    }
  }
}

std::optional<std::size_t> Corpus::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

std::size_t Corpus::ordinal(std::string_view id) const {
  auto found = find(id);
  if (!found) throw DataError("unknown passage id \"" + std::string(id) + "\"");
  return *found;
}

std::string Corpus::indexed_text(std::size_t ordinal, bool include_title) const {
  const auto& p = passages_.at(ordinal);
  if (include_title && !p.title.empty()) return p.title + " " + p.text;
  return p.text;
}

std::uint64_t Corpus::checksum() const {
  std::uint64_t h = fnv1a64("corpus");
  for (const auto& p : passages_) {
    for (const auto* field : {&p.id, &p.title, &p.text}) {
      h = fnv1a64(*field, h);
      h = fnv1a64(std::string_view("\0", 1), h);
    }
  }
  return h;
}

Corpus parse_corpus(std::istream& in) {
  std::vector<Passage> passages;
  std::unordered_map<std::string, std::size_t> first_line;
  for_each_json_line(in, "corpus", [&](std::size_t line_no, const json& obj) {
    Passage p;
    p.id = required_string(obj, "_id", "corpus", line_no);
    p.text = required_string(obj, "text", "corpus", line_no);
    p.title = optional_string(obj, "title");
    if (auto [it, inserted] = first_line.emplace(p.id, line_no); !inserted) {
      throw DataError("corpus: duplicate _id \"" + p.id + "\" on line " +
                      std::to_string(line_no) + " (first seen on line " +
                      std::to_string(it->second) + ")");
    }
    if (trim(p.text).empty()) {
      throw DataError("corpus: empty text on line " + std::to_string(line_no));
    }
    passages.push_back(std::move(p));
  });
  if (passages.empty()) throw DataError("corpus: file contains no passages");
  return Corpus(std::move(passages));
}

Corpus load_corpus(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_corpus(in);
}

void write_corpus(const Corpus& corpus, std::ostream& out) {
  for (const auto& p : corpus.passages()) {
    json obj = {{"_id", p.id}, {"title", p.title}, {"text", p.text}};
    out << obj.dump() << '\n';
  }
}

void save_corpus(const Corpus& corpus, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_corpus(corpus, out);
}

// ---- Queries --------------------------------------------------------------

QuerySet::QuerySet(std::vector<Query> queries) : queries_(std::move(queries)) {
  by_id_.reserve(queries_.size());
  for (std::size_t i = 0; i < queries_.size(); ++i) {
    if (queries_[i].id.empty()) throw DataError("query " + std::to_string(i) + " has an empty id");
    if (!by_id_.emplace(queries_[i].id, i).second) {
      throw DataError("duplicate query id \"" + queries_[i].id + "\"");
    }
  }
}

std::optional<std::size_t> QuerySet::find(std::string_view id) const {
  auto it = by_id_.find(std::string(id));
  if (it == by_id_.end()) return std::nullopt;
  return it->second;
}

QuerySet parse_queries(std::istream& in) {
  std::vector<Query> queries;
  std::unordered_map<std::string, std::size_t> first_line;
  for_each_json_line(in, "queries", [&](std::size_t line_no, const json& obj) {
    Query q;
    q.id = required_string(obj, "_id", "queries", line_no);
    q.text = required_string(obj, "text", "queries", line_no);
    q.source_passage_id = optional_string(obj, "source_passage_id");
    if (!first_line.emplace(q.id, line_no).second) {
      throw DataError("queries: duplicate _id \"" + q.id + "\" on line " +
                      std::to_string(line_no));
    }
    queries.push_back(std::move(q));
  });
  return QuerySet(std::move(queries));
}

QuerySet load_queries(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_queries(in);
}

void write_queries(const QuerySet& queries, std::ostream& out) {
  for (const auto& q : queries.queries()) {
    json obj = {{"_id", q.id}, {"text", q.text}};
    if (!q.source_passage_id.empty()) obj["source_passage_id"] = q.source_passage_id;
    out << obj.dump() << '\n';
  }
}

void save_queries(const QuerySet& queries, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_queries(queries, out);
}

// ---- Qrels ----------------------------------------------------------------

Qrels parse_qrels(std::istream& in) {
  static constexpr std::string_view kHeader = "query-id\tcorpus-id\tscore";
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  Qrels qrels;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!have_header) {
      if (line != kHeader) {
        throw DataError("qrels: missing header \"query-id<TAB>corpus-id<TAB>score\"");
      }
      have_header = true;
      continue;
    }
    if (trim(line).empty()) continue;
    auto cols = split_tabs(line);
    if (cols.size() != 3 || cols[0].empty() || cols[1].empty()) {
      throw DataError("qrels: malformed row on line " + std::to_string(line_no));
    }
    int grade = 0;
    auto grade_text = trim(cols[2]);
    auto [ptr, ec] = std::from_chars(grade_text.data(), grade_text.data() + grade_text.size(), grade);
    if (ec != std::errc{} || ptr != grade_text.data() + grade_text.size() || grade_text.empty()) {
      throw DataError("qrels: non-integer grade \"" + std::string(cols[2]) + "\" on line " +
                      std::to_string(line_no));
    }
    if (grade < 0) {
      throw DataError("qrels: negative grade on line " + std::to_string(line_no));
    }
    qrels[std::string(cols[0])][std::string(cols[1])] = grade;
  }
  if (!have_header) throw DataError("qrels: missing header");
  return qrels;
}

Qrels load_qrels(const std::filesystem::path& path) {
  auto in = open_input(path);
  return parse_qrels(in);
}

void write_qrels(const Qrels& qrels, std::ostream& out) {
  out << "query-id\tcorpus-id\tscore\n";
  for (const auto& [qid, grades] : qrels) {
    for (const auto& [pid, grade] : grades) out << qid << '\t' << pid << '\t' << grade << '\n';
  }
}

void save_qrels(const Qrels& qrels, const std::filesystem::path& path) {
  auto out = open_output(path);
  write_qrels(qrels, out);
}

std::vector<std::string> check_qrels(const Qrels& qrels, const QuerySet& queries,
                                     const Corpus& corpus) {
  std::vector<std::string> problems;
  for (const auto& [qid, grades] : qrels) {
    if (!queries.find(qid)) problems.push_back("unknown query id \"" + qid + "\"");
    for (const auto& [pid, grade] : grades) {
      if (!corpus.find(pid)) problems.push_back("unknown passage id \"" + pid + "\" for query \"" + qid + "\"");
    }
  }
  return problems;
}

// ---- Sentence cropping ----------------------------------------------------

std::vector<std::string> split_sentences(std::string_view text, std::size_t min_tokens) {
  std::vector<std::string> out;
  auto emit = [&](std::string_view piece) {
    piece = trim(piece);
    if (!piece.empty() && tokenize(piece).size() >= min_tokens) out.emplace_back(piece);
  };
  std::size_t start = 0;
  for (std::size_t i = 0; i < text.size(); ++i) {
    char c = text[i];
    if (c != '.' && c != '!' && c != '?') continue;
    bool boundary = i + 1 == text.size() || text[i + 1] == ' ' || text[i + 1] == '\t' ||
                    text[i + 1] == '\n' || text[i + 1] == '\r';
    if (!boundary) continue;
    emit(text.substr(start, i + 1 - start));
    start = i + 1;
  }
  if (start < text.size()) emit(text.substr(start));
  return out;
}

QuerySet crop_queries(const Corpus& corpus, const CropOptions& options) {
  if (options.cap == 0) throw ConfigError("crop_queries: cap must be >= 1");
  std::vector<Query> all;
  for (const auto& p : corpus.passages()) {
    auto sentences = split_sentences(p.text, options.min_tokens);
    for (std::size_t s = 0; s < sentences.size(); ++s) {
      all.push_back(Query{p.id + "#" + std::to_string(s), std::move(sentences[s]), p.id});
    }
  }
  if (all.size() <= options.cap) return QuerySet(std::move(all));
  std::vector<Query> sampled;
  sampled.reserve(options.cap);
  std::mt19937_64 rng(options.seed);
  // std::sample is a selection sample here, so corpus order is preserved.
  std::sample(std::make_move_iterator(all.begin()), std::make_move_iterator(all.end()),
              std::back_inserter(sampled), options.cap, rng);
  return QuerySet(std::move(sampled));
}

}  // namespace altboot
