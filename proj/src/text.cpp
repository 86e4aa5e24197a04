#include "altboot/text.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "altboot/error.hpp"

namespace altboot {

namespace {

bool is_word_byte(unsigned char c) {
  return (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') ||
         (c >= 'A' && c <= 'Z') || c >= 0x80;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

// Draws `count` distinct positions out of [0, n), returned in ascending order.
std::vector<std::size_t> pick_positions(std::size_t n, std::size_t count,
                                        std::mt19937_64& rng) {
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), std::size_t{0});
  std::vector<std::size_t> picked;
  picked.reserve(count);
  std::sample(all.begin(), all.end(), std::back_inserter(picked), count, rng);
  return picked;
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::string current;
  for (char ch : text) {
    auto c = static_cast<unsigned char>(ch);
    if (is_word_byte(c)) {
      current.push_back(c < 0x80 ? static_cast<char>(std::tolower(c)) : ch);
    } else if (!current.empty()) {
      out.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) out.push_back(std::move(current));
  return out;
}

std::uint64_t fnv1a64(std::string_view bytes, std::uint64_t basis) {
  std::uint64_t h = basis;
  for (char ch : bytes) {
    h ^= static_cast<unsigned char>(ch);
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::uint32_t hash_token(std::string_view token, std::uint32_t buckets) {
  if (buckets == 0) throw ConfigError("hash_token: buckets must be >= 1");
  return static_cast<std::uint32_t>(fnv1a64(token) % buckets);
}

std::uint64_t derive_seed(std::uint64_t master, std::string_view key) {
  return splitmix64(master ^ splitmix64(fnv1a64(key)));
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b,
                          std::uint64_t c) {
  std::uint64_t h = splitmix64(master);
  h = splitmix64(h ^ a);
  h = splitmix64(h ^ b);
  return splitmix64(h ^ c);
}

void NoiseConfig::validate() const {
  if (!(rate >= 0.0 && rate <= 1.0)) {
    throw ConfigError("noise rate must lie in [0, 1], got " + std::to_string(rate));
  }
}

std::size_t noise_count(double rate, std::size_t n) {
  if (rate <= 0.0 || n == 0) return 0;
  // 1e-9 absorbs products like 0.1 * 30 = 3.0000000000000004.
  auto k = static_cast<std::size_t>(std::ceil(rate * static_cast<double>(n) - 1e-9));
  return std::clamp<std::size_t>(k, 1, n);
}

TokenSeq corrupt(TokenSeq tokens, const NoiseConfig& cfg, NoiseStages* stages) {
  cfg.validate();
  if (cfg.rate == 0.0 || tokens.empty()) {
    if (stages) stages->shuffled = stages->deleted = tokens;
    return tokens;
  }
  std::mt19937_64 rng(cfg.seed);

  // shuffle
  {
    auto pos = pick_positions(tokens.size(), noise_count(cfg.rate, tokens.size()), rng);
    std::vector<std::string> picked;
    picked.reserve(pos.size());
    for (auto p : pos) picked.push_back(std::move(tokens[p]));
    std::shuffle(picked.begin(), picked.end(), rng);
    for (std::size_t i = 0; i < pos.size(); ++i) tokens[pos[i]] = std::move(picked[i]);
  }
  if (stages) stages->shuffled = tokens;

  // delete
  {
    auto pos = pick_positions(tokens.size(), noise_count(cfg.rate, tokens.size()), rng);
    std::vector<bool> drop(tokens.size(), false);
    for (auto p : pos) drop[p] = true;
    TokenSeq kept;
    kept.reserve(tokens.size() - pos.size());
    for (std::size_t i = 0; i < tokens.size(); ++i) {
      if (!drop[i]) kept.push_back(std::move(tokens[i]));
    }
    tokens = std::move(kept);
  }
  if (stages) stages->deleted = tokens;

  // mask
  for (auto p : pick_positions(tokens.size(), noise_count(cfg.rate, tokens.size()), rng)) {
    tokens[p] = cfg.mask_symbol;
  }
  return tokens;
}

}  // namespace altboot
