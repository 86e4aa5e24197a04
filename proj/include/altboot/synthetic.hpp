#pragma once

#include <cstdint>
#include <vector>

#include "altboot/corpus.hpp"

namespace altboot {

/// Parameters of a seeded latent-topic world. Every passage has a primary
/// and a secondary topic; words come from the topics' word lists (which
/// overlap, so surface words are ambiguous) or from a shared background
/// list. Relevance is defined by the latent topics alone.
struct WorldConfig {
  std::size_t passages = 3000;
  std::size_t topics = 60;
  std::size_t content_words = 1200;
  std::size_t words_per_topic = 40;
  std::size_t background_words = 150;
  std::size_t sentences_min = 3;
  std::size_t sentences_max = 6;
  std::size_t sentence_len_min = 6;
  std::size_t sentence_len_max = 14;
  double topic_word_prob = 0.55;
  double secondary_share = 0.3;
  std::size_t train_queries = 500;
  std::size_t validation_queries = 200;
  std::size_t query_len_min = 4;
  std::size_t query_len_max = 8;
  double query_topic_word_prob = 0.75;
  std::uint64_t seed = 20240601;
};

struct SyntheticWorld {
  Corpus corpus;
  /// Sentence-cropped pseudo-queries (crop_queries with cap = train_queries).
  QuerySet train_queries;
  /// Topic-generated queries with latent-topic judgments: grade 2 when the
  /// passage's primary topic matches, 1 when only its secondary topic does.
  QuerySet validation_queries;
  Qrels validation_qrels;
  std::vector<std::size_t> primary_topic;
  std::vector<std::size_t> secondary_topic;
};

SyntheticWorld make_world(const WorldConfig& cfg);

}  // namespace altboot
