#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace mc {

using Json = nlohmann::ordered_json;

// SplitMix64-backed generator. Every stochastic step in the engine draws from
// this so results are identical across standard library implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next();
  // Uniform in [0, 1) with 53 bits of precision.
  double uniform();
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);

  template <typename T>
  void shuffle(std::vector<T>& items) {
    for (std::size_t i = items.size(); i > 1; --i) {
      std::size_t j = static_cast<std::size_t>(below(i));
      std::swap(items[i - 1], items[j]);
    }
  }

 private:
  std::uint64_t state_;
};

// Stateless mix of (seed, counter); used where a draw must be addressable by
// position rather than by stream order.
std::uint64_t mix64(std::uint64_t seed, std::uint64_t counter);

std::string sha256_hex(std::string_view bytes);

// Throws FormatError naming the byte offset of the first invalid sequence.
void validate_utf8(std::string_view text);
bool is_valid_utf8(std::string_view text);

std::string to_lower_ascii(std::string_view s);
std::string trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char delim);

std::string read_file(const std::filesystem::path& path);
// Writes to a sibling temp file, fsyncs and renames over the target.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace mc
