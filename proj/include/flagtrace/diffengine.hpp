#pragma once

#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flagtrace/flagmodel.hpp"
#include "flagtrace/report.hpp"
#include "flagtrace/snapshot.hpp"

namespace flagtrace::diff {

enum class Scope { Group, Define, IncludeOrder, LinkOrder, Opaque };

std::string_view to_string(Scope s);

// One minimal change. For Group, Define and Opaque the sides hold at most
// one entry (empty means absent) and `name` is the group id, macro name or
// opaque position. For IncludeOrder and LinkOrder the sides hold the whole
// sequence.
struct FlagDelta {
  Scope scope = Scope::Group;
  std::string name;
  std::vector<flags::FlagEntry> before;
  std::vector<flags::FlagEntry> after;

  friend bool operator==(const FlagDelta&, const FlagDelta&) = default;
};

struct DiffReport {
  std::vector<std::string> added_tus;
  std::vector<std::string> removed_tus;
  std::map<std::string, std::vector<FlagDelta>> per_tu_changes;
  std::vector<std::string> added_targets;
  std::vector<std::string> removed_targets;
  std::map<std::string, std::vector<FlagDelta>> per_target_changes;
  // Heuristic observations, e.g. a removed and an added TU that differ only
  // by drive letter.
  std::vector<std::string> notes;

  bool empty() const;
  std::size_t delta_count() const;
};

std::vector<FlagDelta> diff_effective(const flags::EffectiveFlagSet& a, const flags::EffectiveFlagSet& b);

// Applies deltas produced by diff_effective(a, b) to a, yielding b.
flags::EffectiveFlagSet apply_deltas(flags::EffectiveFlagSet set, const std::vector<FlagDelta>& deltas);

DiffReport diff(const BuildSnapshot& a, const BuildSnapshot& b);

std::string render_report(const DiffReport& report, Format format);

}  // namespace flagtrace::diff
