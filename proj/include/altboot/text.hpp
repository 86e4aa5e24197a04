#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace altboot {

/// Ordered lowercase word tokens. Never contains empty strings.
using TokenSeq = std::vector<std::string>;

/// Lowercases ASCII letters and splits on every run of characters that are
/// not ASCII alphanumerics. Bytes >= 0x80 are kept as word characters so
/// multi-byte UTF-8 words survive intact.
TokenSeq tokenize(std::string_view text);

/// FNV-1a, 64-bit, over the raw bytes.
std::uint64_t fnv1a64(std::string_view bytes,
                      std::uint64_t basis = 0xcbf29ce484222325ULL);

/// Stable vocabulary bucket of a token: fnv1a64(token) mod buckets.
std::uint32_t hash_token(std::string_view token, std::uint32_t buckets);

/// Mixes a master seed with a string key (splitmix64 finalizer over
/// FNV-1a). Used for per-query and per-example random streams.
std::uint64_t derive_seed(std::uint64_t master, std::string_view key);
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                          std::uint64_t b = 0, std::uint64_t c = 0);

struct NoiseConfig {
  double rate = 0.1;
  std::string mask_symbol = "__mask__";
  std::uint64_t seed = 0;

  void validate() const;
};

/// Number of positions a noise stage touches on a sequence of length n:
/// ceil(rate * n), at least one when rate > 0 and n > 0.
std::size_t noise_count(double rate, std::size_t n);

/// Shuffle, then delete, then mask. Each stage picks noise_count(rate, len)
/// distinct positions uniformly from the current sequence. Shuffling
/// permutes the tokens at the chosen positions among themselves.
/// `stages`, when given, receives the sequence after shuffling and after
/// deletion.
struct NoiseStages {
  TokenSeq shuffled;
  TokenSeq deleted;
};
TokenSeq corrupt(TokenSeq tokens, const NoiseConfig& cfg, NoiseStages* stages = nullptr);

}  // namespace altboot
