#include "altboot/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <set>

#include "altboot/error.hpp"
#include "altboot/text.hpp"

namespace altboot {

namespace {

// Pronounceable pseudo-words: index -> consonant-vowel syllables.
std::string pseudo_word(std::size_t index, std::size_t min_syllables) {
  static constexpr const char* kConsonants = "bdfgklmnprstvz";
  static constexpr const char* kVowels = "aeiou";
  std::string out;
  std::size_t syllables = 0;
  do {
    out.push_back(kConsonants[index % 14]);
    index /= 14;
    out.push_back(kVowels[index % 5]);
    index /= 5;
    ++syllables;
  } while (index > 0 || syllables < min_syllables);
  return out;
}

// Zipf(1) weights over n ranks.
std::discrete_distribution<std::size_t> zipf(std::size_t n) {
  std::vector<double> w(n);
  for (std::size_t i = 0; i < n; ++i) w[i] = 1.0 / static_cast<double>(i + 1);
  return std::discrete_distribution<std::size_t>(w.begin(), w.end());
}

std::size_t uniform(std::size_t lo, std::size_t hi, std::mt19937_64& rng) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

}  // namespace

SyntheticWorld make_world(const WorldConfig& cfg) {
  if (cfg.passages == 0 || cfg.topics < 2 || cfg.words_per_topic == 0 ||
      cfg.words_per_topic > cfg.content_words || cfg.background_words == 0) {
    throw ConfigError("synthetic world: invalid sizes");
  }
  std::mt19937_64 rng(cfg.seed);

  std::vector<std::string> content(cfg.content_words), background(cfg.background_words);
  for (std::size_t i = 0; i < cfg.content_words; ++i) content[i] = pseudo_word(i, 3);
  for (std::size_t i = 0; i < cfg.background_words; ++i) background[i] = pseudo_word(i, 1) + "x";

  // Each topic owns a random subset of the content vocabulary, in a random
  // order that fixes the word's Zipf rank inside the topic.
  std::vector<std::vector<std::size_t>> topic_words(cfg.topics);
  std::vector<std::size_t> all(cfg.content_words);
  std::iota(all.begin(), all.end(), std::size_t{0});
  for (auto& words : topic_words) {
    std::shuffle(all.begin(), all.end(), rng);
    words.assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(cfg.words_per_topic));
  }
  auto topic_rank = zipf(cfg.words_per_topic);
  auto background_rank = zipf(cfg.background_words);
  std::bernoulli_distribution topical(cfg.topic_word_prob);
  std::bernoulli_distribution secondary(cfg.secondary_share);

  auto capitalise = [](std::string s) {
    if (!s.empty()) s[0] = static_cast<char>(s[0] - 'a' + 'A');
    return s;
  };

  SyntheticWorld world;
  std::vector<Passage> passages;
  for (std::size_t p = 0; p < cfg.passages; ++p) {
    const std::size_t primary = p % cfg.topics;
    std::size_t other = uniform(0, cfg.topics - 2, rng);
    if (other >= primary) ++other;
    world.primary_topic.push_back(primary);
    world.secondary_topic.push_back(other);

    std::string text;
    const std::size_t sentences = uniform(cfg.sentences_min, cfg.sentences_max, rng);
    for (std::size_t s = 0; s < sentences; ++s) {
      const std::size_t len = uniform(cfg.sentence_len_min, cfg.sentence_len_max, rng);
      std::string sentence;
      for (std::size_t w = 0; w < len; ++w) {
        std::string word;
        if (topical(rng)) {
          const auto& words = topic_words[secondary(rng) ? other : primary];
          word = content[words[topic_rank(rng)]];
        } else {
          word = background[background_rank(rng)];
        }
        if (w == 0) word = capitalise(word);
        sentence += (w == 0 ? "" : " ") + word;
      }
      text += (s == 0 ? "" : " ") + sentence + ".";
    }
    passages.push_back(Passage{"p" + std::to_string(p), "", std::move(text)});
  }
  world.corpus = Corpus(std::move(passages));
  world.train_queries = crop_queries(world.corpus, CropOptions{cfg.train_queries, derive_seed(cfg.seed, 0xC0), 3});

  std::vector<Query> queries;
  std::mt19937_64 qrng(derive_seed(cfg.seed, 0xC1));
  std::bernoulli_distribution query_topical(cfg.query_topic_word_prob);
  for (std::size_t q = 0; q < cfg.validation_queries; ++q) {
    const std::size_t topic = uniform(0, cfg.topics - 1, qrng);
    const std::size_t len = uniform(cfg.query_len_min, cfg.query_len_max, qrng);
    std::string text;
    for (std::size_t w = 0; w < len; ++w) {
      const auto& word = query_topical(qrng) ? content[topic_words[topic][topic_rank(qrng)]]
                                             : background[background_rank(qrng)];
      text += (w == 0 ? "" : " ") + word;
    }
    const std::string qid = "v" + std::to_string(q);
    queries.push_back(Query{qid, text + "?", ""});
    auto& grades = world.validation_qrels[qid];
    for (std::size_t p = 0; p < cfg.passages; ++p) {
      if (world.primary_topic[p] == topic) {
        grades[world.corpus[p].id] = 2;
      } else if (world.secondary_topic[p] == topic) {
        grades[world.corpus[p].id] = 1;
      }
    }
  }
  world.validation_queries = QuerySet(std::move(queries));
  return world;
}

}  // namespace altboot
