#include <doctest.h>

#include <filesystem>
#include <sstream>

#include "altboot/corpus.hpp"
#include "altboot/error.hpp"
#include "oracles.hpp"

using namespace altboot;

namespace {

// Pulls "key":"value" out of a flat JSON line without escapes.
std::string field(const std::string& line, const std::string& key) {
  auto k = line.find("\"" + key + "\":\"");
  if (k == std::string::npos) return {};
  auto start = k + key.size() + 4;
  return line.substr(start, line.find('"', start) - start);
}

std::string error_of(const std::string& text) {
  std::istringstream in(text);
  try {
    parse_corpus(in);
  } catch (const DataError& e) {
    return e.what();
  }
  return {};
}

}  // namespace

TEST_CASE("parse_corpus") {
  std::istringstream in(
      "{\"_id\":\"d1\",\"title\":\"T1\",\"text\":\"first\"}\n"
      "{\"_id\":\"d2\",\"text\":\"second\"}\n"
      "\n"
      "{\"_id\":\"d3\",\"title\":null,\"text\":\"third\",\"metadata\":{}}");
  auto c = parse_corpus(in);
  REQUIRE(c.size() == 3);
  CHECK(c[0] == Passage{"d1", "T1", "first"});
  CHECK(c[1] == Passage{"d2", "", "second"});
  CHECK(c[2].id == "d3");
  CHECK(c.ordinal("d2") == 1);
  CHECK_FALSE(c.find("zz"));
  CHECK_THROWS_AS(c.ordinal("zz"), DataError);
  CHECK(c.indexed_text(0) == "T1 first");
  CHECK(c.indexed_text(0, false) == "first");
  CHECK(c.indexed_text(1) == "second");
}

TEST_CASE("parse_corpus against a hand-written field extractor") {
  std::mt19937_64 rng(4983);
  std::string text;
  std::vector<std::string> lines;
  for (int i = 0; i < 10; ++i) {
    std::string line = "{\"_id\":\"" + std::to_string(4983 + i * 17) + "\",\"title\":\"" +
                       oracle::random_text(rng, 4) + "\",\"text\":\"" + oracle::random_text(rng, 20) +
                       "\"}";
    lines.push_back(line);
    text += line + "\n";
  }
  std::istringstream in(text);
  auto c = parse_corpus(in);
  REQUIRE(c.size() == 10);
  for (std::size_t i = 0; i < 10; ++i) {
    CHECK(c[i].id == field(lines[i], "_id"));
    CHECK(c[i].title == field(lines[i], "title"));
    CHECK(c[i].text == field(lines[i], "text"));
  }
}

TEST_CASE("corpus errors") {
  auto dup = error_of(
      "{\"_id\":\"d1\",\"text\":\"a\"}\n{\"_id\":\"d2\",\"text\":\"b\"}\n"
      "{\"_id\":\"d3\",\"text\":\"c\"}\n{\"_id\":\"d1\",\"text\":\"d\"}\n");
  CHECK(dup.find("d1") != std::string::npos);
  CHECK(dup.find("line 4") != std::string::npos);

  auto bad = error_of("{\"_id\":\"d1\",\"text\":\"a\"}\n{\"_id\": oops}\n");
  CHECK(bad.find("line 2") != std::string::npos);

  CHECK_FALSE(error_of("").empty());
  CHECK_FALSE(error_of("\n\n").empty());
  CHECK_FALSE(error_of("{\"text\":\"no id\"}").empty());
  CHECK_FALSE(error_of("{\"_id\":\"x\",\"text\":\"   \"}").empty());
  CHECK_FALSE(error_of("[1,2]").empty());
  CHECK_THROWS_AS(Corpus({{"a", "", "x"}, {"a", "", "y"}}), DataError);
  CHECK_THROWS_AS(load_corpus("/nonexistent/corpus.jsonl"), DataError);
}

TEST_CASE("queries") {
  std::istringstream in("{\"_id\":\"q1\",\"text\":\"what is it\"}\n{\"_id\":\"q2\",\"text\":\"x\"}");
  auto q = parse_queries(in);
  REQUIRE(q.size() == 2);
  CHECK(q[0].text == "what is it");
  CHECK(q.find("q2") == std::size_t{1});

  std::istringstream dup("{\"_id\":\"q1\",\"text\":\"a\"}\n{\"_id\":\"q1\",\"text\":\"b\"}");
  CHECK_THROWS_AS(parse_queries(dup), DataError);
}

TEST_CASE("qrels") {
  auto parse = [](const std::string& s) {
    std::istringstream in(s);
    return parse_qrels(in);
  };
  const std::string header = "query-id\tcorpus-id\tscore\n";
  CHECK(parse(header + "q1\td7\t1\n") == Qrels{{"q1", {{"d7", 1}}}});
  CHECK(parse(header).empty());
  CHECK(parse("query-id\tcorpus-id\tscore").empty());
  CHECK(parse(header + "q1\td1\t1\r\nq1\td2\t2\r\nq1\td3\t0") ==
        Qrels{{"q1", {{"d1", 1}, {"d2", 2}, {"d3", 0}}}});
  CHECK_THROWS_AS(parse("q1\td7\t1\n"), DataError);
  CHECK_THROWS_AS(parse(""), DataError);
  CHECK_THROWS_AS(parse(header + "q1\td7\t1.5\n"), DataError);
  CHECK_THROWS_AS(parse(header + "q1\td7\tx\n"), DataError);
  CHECK_THROWS_AS(parse(header + "q1\td7\t-1\n"), DataError);
  CHECK_THROWS_AS(parse(header + "q1\td7\n"), DataError);
  CHECK_THROWS_AS(parse(header + "q1\td7\t1\textra\n"), DataError);
}

TEST_CASE("check_qrels") {
  Corpus c({{"d1", "", "a"}});
  QuerySet q({{"q1", "a", ""}});
  CHECK(check_qrels({{"q1", {{"d1", 1}}}}, q, c).empty());
  CHECK(check_qrels({{"q2", {{"d9", 1}}}}, q, c).size() == 2);
}

TEST_CASE("save and load round trip") {
  auto dir = std::filesystem::temp_directory_path() / "altboot_corpus_rt";
  std::filesystem::create_directories(dir);
  auto c = oracle::random_corpus(50, 9);
  save_corpus(c, dir / "c.jsonl");
  CHECK(load_corpus(dir / "c.jsonl") == c);

  QuerySet q({{"q1", "quote \" and \\ and \xc3\xa9", ""}, {"q2", "tab\there", "d1"}});
  save_queries(q, dir / "q.jsonl");
  auto q2 = load_queries(dir / "q.jsonl");
  CHECK(q2[0].text == q[0].text);
  CHECK(q2[1].text == q[1].text);

  Qrels r{{"q1", {{"d1", 1}, {"d2", 0}}}, {"q2", {{"d3", 3}}}};
  save_qrels(r, dir / "r.tsv");
  CHECK(load_qrels(dir / "r.tsv") == r);
  std::filesystem::remove_all(dir);
}

TEST_CASE("checksum tracks content") {
  auto a = oracle::random_corpus(20, 1);
  auto b = oracle::random_corpus(20, 1);
  auto c = oracle::random_corpus(20, 2);
  CHECK(a.checksum() == b.checksum());
  CHECK(a.checksum() != c.checksum());
  // Field boundaries matter.
  CHECK(Corpus({{"ab", "", "c"}}).checksum() != Corpus({{"a", "", "bc"}}).checksum());
}

TEST_CASE("split_sentences") {
  CHECK(split_sentences("A is B. C is D. E!", 1) ==
        std::vector<std::string>{"A is B.", "C is D.", "E!"});
  CHECK(split_sentences("A is B. C is D. E!") == std::vector<std::string>{"A is B.", "C is D."});
  CHECK(split_sentences("Version 2.5 is out now") ==
        std::vector<std::string>{"Version 2.5 is out now"});
  CHECK(split_sentences("Why is this so? Because it is!\nNew line here.") ==
        std::vector<std::string>{"Why is this so?", "Because it is!", "New line here."});
  CHECK(split_sentences("").empty());
  CHECK(split_sentences("   ").empty());
}

TEST_CASE("crop_queries") {
  SUBCASE("small corpus, cap not binding") {
    Corpus c({{"d1", "", "one two three. four five six. seven eight nine."},
              {"d2", "", "ten eleven twelve thirteen. x."},
              {"d3", "", "a b c d e f. g h i j. k l m n. o p q r. s t u v w."}});
    auto q = crop_queries(c, {.cap = 10, .seed = 1});
    REQUIRE(q.size() == 9);
    CHECK(q[0] == Query{"d1#0", "one two three.", "d1"});
    CHECK(q[3].id == "d2#0");
    CHECK(q[8].id == "d3#4");
    for (const auto& qq : q.queries()) {
      CHECK(c[c.ordinal(qq.source_passage_id)].text.find(qq.text) != std::string::npos);
    }
  }
  SUBCASE("sampling is deterministic and order preserving") {
    std::vector<Passage> ps;
    for (int i = 0; i < 20; ++i) {
      std::string text;
      for (int s = 0; s < 5; ++s) text += "word" + std::to_string(i) + " is number " + std::to_string(s) + ". ";
      ps.push_back({"p" + std::to_string(i), "", text});
    }
    Corpus c(std::move(ps));
    CHECK(crop_queries(c, {.cap = 1000}).size() == 100);
    auto a = crop_queries(c, {.cap = 20, .seed = 7});
    auto b = crop_queries(c, {.cap = 20, .seed = 7});
    CHECK(a.size() == 20);
    CHECK(a == b);
    CHECK_FALSE(a == crop_queries(c, {.cap = 20, .seed = 8}));
    for (std::size_t i = 1; i < a.size(); ++i) {
      auto ord = [&](const Query& q) {
        return std::make_pair(c.ordinal(q.source_passage_id), std::stoi(q.id.substr(q.id.find('#') + 1)));
      };
      CHECK(ord(a[i - 1]) < ord(a[i]));
    }
  }
  SUBCASE("cap 0 is a config error") {
    Corpus c({{"d1", "", "x y z."}});
    CHECK_THROWS_AS(crop_queries(c, {.cap = 0}), ConfigError);
  }
}
