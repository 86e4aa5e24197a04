#pragma once

#include "altboot/bootstrap.hpp"
#include "altboot/synthetic.hpp"

namespace fixture {

inline altboot::WorldConfig tiny_world_config() {
  altboot::WorldConfig w;
  w.passages = 300;
  w.topics = 10;
  w.content_words = 300;
  w.words_per_topic = 40;
  w.background_words = 40;
  w.train_queries = 150;
  w.validation_queries = 60;
  w.seed = 11;
  return w;
}

inline altboot::BootstrapConfig tiny_loop_config(std::uint64_t seed = 3) {
  altboot::BootstrapConfig c;
  c.buckets = 4096;
  c.dim = 16;
  c.seed = seed;
  c.retriever.epochs = 8;
  c.retriever.learning_rate = 0.01;
  c.reranker.dim = 16;
  c.reranker.hidden = 8;
  c.reranker.epochs = 4;
  c.reranker.learning_rate = 0.003;
  return c;
}

}  // namespace fixture
