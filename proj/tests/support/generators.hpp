#pragma once

// Hand-rolled random generators for the property tests. Everything is
// driven by an explicit seed so failures reproduce.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "flagtrace/cmdline.hpp"
#include "flagtrace/snapshot.hpp"

namespace gen {

class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::size_t below(std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_); }
  bool chance(double p) { return std::bernoulli_distribution(p)(engine_); }
  template <typename T>
  const T& pick(const std::vector<T>& v) {
    return v[below(v.size())];
  }
  std::mt19937_64& engine() { return engine_; }

 private:
  std::mt19937_64 engine_;
};

// A short word over [a-z0-9_]; with `nasty`, also spaces, quotes,
// backslashes and tabs.
std::string word(Rng& rng, bool nasty = false);

// argv[1..] drawn from the flag vocabulary, as whole units (a separated
// flag and its argument are always adjacent).
std::vector<std::string> gnu_arguments(Rng& rng, std::size_t units);
std::vector<std::string> msvc_arguments(Rng& rng, std::size_t units);

// Quotes each word with a randomly chosen but valid style for the dialect
// and joins them with random runs of blanks. Tokenizing the result must
// give `words` back.
std::string quote_randomly(Rng& rng, const std::vector<std::string>& words, flagtrace::cmdline::Family family);

std::vector<flagtrace::cmdline::Token> as_tokens(const std::vector<std::string>& words);

// A snapshot over a small pool of paths so that pairs overlap.
flagtrace::BuildSnapshot snapshot(Rng& rng, const std::string& build_id);

// A copy of `base` with a few random edits.
flagtrace::BuildSnapshot mutate(Rng& rng, const flagtrace::BuildSnapshot& base, const std::string& build_id);

}  // namespace gen
