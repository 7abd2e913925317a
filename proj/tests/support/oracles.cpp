#include "oracles.hpp"

#include <unistd.h>

#include <array>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>

namespace oracle {

namespace {

std::optional<std::string> capture(const std::string& command) {
  FILE* p = ::popen(command.c_str(), "r");
  if (!p) return std::nullopt;
  std::string out;
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = std::fread(buf.data(), 1, buf.size(), p)) > 0) out.append(buf.data(), n);
  int status = ::pclose(p);
  if (status != 0) return std::nullopt;
  return out;
}

std::filesystem::path scratch_file() {
  static std::mt19937_64 rng(std::random_device{}());
  return std::filesystem::temp_directory_path() /
         ("ft-oracle-" + std::to_string(::getpid()) + "-" + std::to_string(rng()));
}

}  // namespace

std::optional<std::vector<std::string>> posix_shell_words(const std::string& line) {
  if (::access("/bin/sh", X_OK) != 0) return std::nullopt;
  // The line goes through a file so no outer quoting is needed.
  auto path = scratch_file();
  {
    std::ofstream f(path, std::ios::binary);
    f << "set -f\nset -- " << line << "\nfor a in \"$@\"; do printf '%s\\0' \"$a\"; done\n";
  }
  auto out = capture("/bin/sh " + path.string());
  std::filesystem::remove(path);
  if (!out) return std::nullopt;
  std::vector<std::string> words;
  std::string cur;
  for (char c : *out) {
    if (c == '\0') {
      words.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  return words;
}

std::size_t brute_force_distance(std::string_view a, std::string_view b) {
  if (a.empty()) return b.size();
  if (b.empty()) return a.size();
  std::size_t cost = a.back() == b.back() ? 0 : 1;
  auto a1 = a.substr(0, a.size() - 1);
  auto b1 = b.substr(0, b.size() - 1);
  std::size_t best = brute_force_distance(a1, b1) + cost;
  best = std::min(best, brute_force_distance(a1, b) + 1);
  best = std::min(best, brute_force_distance(a, b1) + 1);
  return best;
}

std::optional<std::string> external_sha256(const std::string& bytes) {
  auto path = scratch_file();
  {
    std::ofstream f(path, std::ios::binary);
    f << bytes;
  }
  auto out = capture("sha256sum " + path.string() + " 2>/dev/null");
  std::filesystem::remove(path);
  if (!out || out->size() < 64) return std::nullopt;
  return out->substr(0, 64);
}

LastWins last_wins(const std::vector<flagtrace::flags::FlagEntry>& entries) {
  LastWins w;
  for (auto it = entries.rbegin(); it != entries.rend(); ++it) {
    if (!it->group.empty()) w.groups.emplace(it->group, *it);  // emplace keeps the first seen, i.e. the last
    if (it->key == "macro_define" || it->key == "macro_undef") {
      std::string v = it->value.value_or("");
      w.defines.emplace(v.substr(0, v.find('=')), *it);
    }
  }
  return w;
}

}  // namespace oracle
