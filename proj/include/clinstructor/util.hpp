#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace clinstructor {

using json = nlohmann::json;

// Hex-encoded SHA-256 of arbitrary bytes.
std::string sha256_hex(std::string_view bytes);

// Seeded generator with platform-independent derived distributions. The
// standard distributions are implementation-defined, which breaks
// bit-determinism across toolchains, so only the raw engine output is used.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64();
  // Uniform integer in [0, bound). bound must be > 0.
  std::uint64_t below(std::uint64_t bound);
  // Uniform double in [0, 1) with 53 random bits.
  double uniform();

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[below(i)]);
    }
  }

 private:
  std::uint64_t state_;
};

// Stable 64-bit mixing of a byte string (FNV-1a followed by a splitmix
// finalizer).
std::uint64_t hash_bytes(std::string_view bytes, std::uint64_t seed = 0);

std::string trim(std::string_view s);
std::string to_lower_ascii(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

// JSONL helpers. read_jsonl reports the 1-based line number on parse errors
// and skips blank lines.
std::vector<json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, std::span<const json> rows);
void write_text_file(const std::filesystem::path& path, std::string_view content);
std::string read_text_file(const std::filesystem::path& path);
json read_json_file(const std::filesystem::path& path);

// Runs fn(i) for i in [0, n) on up to `parallelism` threads. Exceptions
// escaping fn are rethrown on the calling thread after all workers join.
void parallel_for(std::size_t n, std::size_t parallelism,
                  const std::function<void(std::size_t)>& fn);

// Neumaier-compensated sum of the values in ascending order, so the result
// is independent of input order.
double stable_sum(std::vector<double> values);

}  // namespace clinstructor
