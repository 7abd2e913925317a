#pragma once

// Independent reference implementations. None of these share code with the
// library; they exist to check it.

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flagtrace/flagmodel.hpp"

namespace oracle {

// Word-splits `line` with /bin/sh (globbing off) and returns the words, or
// nullopt when no shell is available. Callers keep `line` free of $, `
// and other expansion characters.
std::optional<std::vector<std::string>> posix_shell_words(const std::string& line);

// Plain exponential recursion, no memo. Only for short strings.
std::size_t brute_force_distance(std::string_view a, std::string_view b);

// sha256 as computed by the sha256sum binary, nullopt if absent.
std::optional<std::string> external_sha256(const std::string& bytes);

// Linear scan keeping the last entry per exclusive group and per macro.
struct LastWins {
  std::map<std::string, flagtrace::flags::FlagEntry> groups;
  std::map<std::string, flagtrace::flags::FlagEntry> defines;
};
LastWins last_wins(const std::vector<flagtrace::flags::FlagEntry>& entries);

}  // namespace oracle
