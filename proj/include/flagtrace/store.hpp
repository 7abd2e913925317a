#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flagtrace/error.hpp"
#include "flagtrace/snapshot.hpp"

namespace flagtrace::store {

class StoreError : public Error {
 public:
  enum class Kind { DuplicateBuildId, NotFound, CorruptSnapshot, CorruptIndex, NotAStore };

  StoreError(Kind kind, std::string message) : Error(std::move(message)), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

struct IndexEntry {
  std::string build_id;
  std::string label;
  std::string created;
  std::string content_hash;
  std::string relative_path;
};

// What history reports per build: group id ("opt_level", "warning:unused")
// or "define:<NAME>", optionally narrowed to one TU id or target output.
struct FlagQuery {
  std::string key;
  std::optional<std::string> subject;
};

inline constexpr std::string_view kAbsent = "Absent";

struct HistoryEntry {
  std::string build_id;
  std::string created;
  std::string content_hash;
  std::size_t tu_count = 0;
  std::size_t target_count = 0;
  // Subject (TU id or target output) -> winning spelling or kAbsent.
  // Empty without a query.
  std::map<std::string, std::string> values;
  // True when values differ from the previous entry in the timeline.
  bool changed = false;
};

// Query helper shared with the CLI: the value of `key` in one effective set.
std::string query_value(const flags::EffectiveFlagSet& set, std::string_view key);

// Append-only snapshot repository. Layout:
//   FORMAT              "flagtrace-store\t1"
//   index.tsv           "flagtrace-index\t1" header, then one line per
//                       snapshot: build_id, label, created, hash, path
//   snapshots/*.snap    one file per snapshot
//   lock                advisory write lock
class Store {
 public:
  explicit Store(std::filesystem::path root,
                 const flags::Vocabulary& vocabulary = flags::Vocabulary::builtin());

  const std::filesystem::path& root() const { return root_; }

  // Writes the snapshot, then indexes it. Returns the content hash.
  std::string put(const BuildSnapshot& snapshot);

  BuildSnapshot get(std::string_view build_id) const;

  bool contains(std::string_view build_id) const;

  // Entries ordered by created, then build id.
  std::vector<IndexEntry> index() const;

  std::vector<HistoryEntry> history(std::string_view label,
                                    const std::optional<FlagQuery>& query = std::nullopt) const;

 private:
  std::filesystem::path root_;
  const flags::Vocabulary* vocabulary_;
};

// Snapshot file encoding, exposed for tests and tooling.
std::string encode_snapshot(const BuildSnapshot& snapshot);
BuildSnapshot decode_snapshot(std::string_view bytes,
                              const flags::Vocabulary& vocabulary = flags::Vocabulary::builtin());

}  // namespace flagtrace::store
