#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace callforge {

using Json = nlohmann::ordered_json;

class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// FNV-1a; stable across platforms and runs, unlike std::hash.
std::uint64_t stable_hash(std::string_view data);
std::uint64_t hash_combine(std::uint64_t seed, std::uint64_t value);
std::string hex64(std::uint64_t v);

/// Deterministic generator with a portable bounded draw (the standard
/// distributions are implementation defined).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}
  /// Uniform in [0, bound). bound must be positive.
  std::uint64_t below(std::uint64_t bound);
  /// Uniform in [0, 1).
  double unit();

 private:
  std::mt19937_64 engine_;
};

std::string read_file(const std::filesystem::path &path);
/// Writes through a temporary sibling and renames it into place.
void write_file(const std::filesystem::path &path, std::string_view content);

struct JsonLine {
  int line{0};
  Json value;
  std::string error;  // set when the line does not parse
};

/// Reads a line-delimited JSON file, skipping blank lines.
std::vector<JsonLine> read_jsonl(const std::filesystem::path &path);
std::string to_jsonl(const std::vector<Json> &records);
void write_jsonl(const std::filesystem::path &path, const std::vector<Json> &records);

/// Runs fn(i) for i in [0, n) on up to `workers` threads. The first
/// exception thrown by any task is rethrown after all threads finish.
void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)> &fn);

std::vector<std::string> split(std::string_view s, char sep);
std::string trim(std::string_view s);

}  // namespace callforge
