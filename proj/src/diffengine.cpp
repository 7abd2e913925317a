#include "flagtrace/diffengine.hpp"

#include <algorithm>
#include <set>

#include "json.hpp"

#include "flagtrace/text.hpp"

namespace flagtrace::diff {

using flags::EffectiveFlagSet;
using flags::FlagEntry;

std::string_view to_string(Scope s) {
  switch (s) {
    case Scope::Group: return "group";
    case Scope::Define: return "define";
    case Scope::IncludeOrder: return "include_order";
    case Scope::LinkOrder: return "link_order";
    case Scope::Opaque: return "opaque";
  }
  return "?";
}

bool DiffReport::empty() const {
  return added_tus.empty() && removed_tus.empty() && per_tu_changes.empty() && added_targets.empty() &&
         removed_targets.empty() && per_target_changes.empty();
}

std::size_t DiffReport::delta_count() const {
  std::size_t n = 0;
  for (const auto& [_, d] : per_tu_changes) n += d.size();
  for (const auto& [_, d] : per_target_changes) n += d.size();
  return n;
}

namespace {

template <typename Map>
void diff_keyed(const Map& a, const Map& b, Scope scope, std::vector<FlagDelta>& out) {
  std::set<std::string> names;
  for (const auto& [k, _] : a) names.insert(k);
  for (const auto& [k, _] : b) names.insert(k);
  for (const auto& name : names) {
    auto ia = a.find(name);
    auto ib = b.find(name);
    bool has_a = ia != a.end(), has_b = ib != b.end();
    if (has_a && has_b && ia->second == ib->second) continue;
    FlagDelta d{scope, name, {}, {}};
    if (has_a) d.before.push_back(ia->second);
    if (has_b) d.after.push_back(ib->second);
    out.push_back(std::move(d));
  }
}

template <typename Map>
void apply_keyed(Map& m, const FlagDelta& d) {
  if (d.after.empty()) {
    m.erase(d.name);
  } else {
    m.insert_or_assign(d.name, d.after.front());
  }
}

}  // namespace

std::vector<FlagDelta> diff_effective(const EffectiveFlagSet& a, const EffectiveFlagSet& b) {
  std::vector<FlagDelta> out;
  diff_keyed(a.scalar_groups, b.scalar_groups, Scope::Group, out);
  diff_keyed(a.defines, b.defines, Scope::Define, out);
  if (a.include_dirs != b.include_dirs) {
    out.push_back({Scope::IncludeOrder, "include_dirs", a.include_dirs, b.include_dirs});
  }
  if (a.link_inputs != b.link_inputs) {
    out.push_back({Scope::LinkOrder, "link_inputs", a.link_inputs, b.link_inputs});
  }
  // Opaque tokens are compared by position; we cannot know which of them
  // commute.
  std::size_t n = std::max(a.opaque.size(), b.opaque.size());
  for (std::size_t i = 0; i < n; ++i) {
    bool has_a = i < a.opaque.size(), has_b = i < b.opaque.size();
    if (has_a && has_b && a.opaque[i] == b.opaque[i]) continue;
    FlagDelta d{Scope::Opaque, std::to_string(i), {}, {}};
    if (has_a) d.before.push_back(a.opaque[i]);
    if (has_b) d.after.push_back(b.opaque[i]);
    out.push_back(std::move(d));
  }
  return out;
}

EffectiveFlagSet apply_deltas(EffectiveFlagSet set, const std::vector<FlagDelta>& deltas) {
  std::vector<std::optional<FlagEntry>> opaque(set.opaque.begin(), set.opaque.end());
  for (const auto& d : deltas) {
    switch (d.scope) {
      case Scope::Group: apply_keyed(set.scalar_groups, d); break;
      case Scope::Define: apply_keyed(set.defines, d); break;
      case Scope::IncludeOrder: set.include_dirs = d.after; break;
      case Scope::LinkOrder: set.link_inputs = d.after; break;
      case Scope::Opaque: {
        auto pos = static_cast<std::size_t>(std::stoul(d.name));
        if (opaque.size() <= pos) opaque.resize(pos + 1);
        if (d.after.empty()) {
          opaque[pos].reset();
        } else {
          opaque[pos] = d.after.front();
        }
        break;
      }
    }
  }
  set.opaque.clear();
  for (auto& e : opaque) {
    if (e) set.opaque.push_back(std::move(*e));
  }
  return set;
}

DiffReport diff(const BuildSnapshot& a, const BuildSnapshot& b) {
  DiffReport r;
  for (const auto& tu : a.tus) {
    const auto* other = b.find_tu(tu.id);
    if (!other) {
      r.removed_tus.push_back(tu.id);
      continue;
    }
    auto deltas = diff_effective(tu.effective, other->effective);
    if (!deltas.empty()) r.per_tu_changes.emplace(tu.id, std::move(deltas));
  }
  for (const auto& tu : b.tus) {
    if (!a.find_tu(tu.id)) r.added_tus.push_back(tu.id);
  }
  for (const auto& t : a.targets) {
    const auto* other = b.find_target(t.output);
    if (!other) {
      r.removed_targets.push_back(t.output);
      continue;
    }
    auto deltas = diff_effective(t.effective, other->effective);
    if (!deltas.empty()) r.per_target_changes.emplace(t.output, std::move(deltas));
  }
  for (const auto& t : b.targets) {
    if (!a.find_target(t.output)) r.added_targets.push_back(t.output);
  }

  // Builds from different host OSes may spell the same path with and
  // without a drive letter; surface that instead of merging silently.
  auto note_drive_pairs = [&](const std::vector<std::string>& removed, const std::vector<std::string>& added,
                              std::string_view what) {
    for (const auto& x : removed) {
      for (const auto& y : added) {
        if (x != y && text::strip_drive(x) == text::strip_drive(y)) {
          r.notes.push_back(std::string(what) + " " + x + " and " + y + " differ only by drive letter");
        }
      }
    }
  };
  note_drive_pairs(r.removed_tus, r.added_tus, "translation units");
  note_drive_pairs(r.removed_targets, r.added_targets, "targets");
  return r;
}

namespace {

std::string side_text(const FlagDelta& d, const std::vector<FlagEntry>& side) {
  bool sequence = d.scope == Scope::IncludeOrder || d.scope == Scope::LinkOrder;
  if (!sequence && side.empty()) return "Absent";
  std::string out;
  if (sequence) out += "[";
  for (std::size_t i = 0; i < side.size(); ++i) {
    if (i) out += " ";
    out += flags::display(side[i]);
  }
  if (sequence) out += "]";
  return out;
}

nlohmann::json side_json(const FlagDelta& d, const std::vector<FlagEntry>& side) {
  if (d.scope == Scope::IncludeOrder || d.scope == Scope::LinkOrder) {
    auto arr = nlohmann::json::array();
    for (const auto& e : side) arr.push_back(flags::display(e));
    return arr;
  }
  if (side.empty()) return nullptr;
  return flags::display(side.front());
}

void render_deltas_text(std::string& out, const std::vector<FlagDelta>& deltas) {
  for (const auto& d : deltas) {
    out += "      " + std::string(to_string(d.scope));
    if (d.scope == Scope::Group || d.scope == Scope::Define || d.scope == Scope::Opaque) {
      out += " " + d.name;
    }
    out += ": " + side_text(d, d.before) + " -> " + side_text(d, d.after) + "\n";
  }
}

nlohmann::json deltas_json(const std::vector<FlagDelta>& deltas) {
  auto arr = nlohmann::json::array();
  for (const auto& d : deltas) {
    arr.push_back({{"scope", to_string(d.scope)},
                   {"name", d.name},
                   {"before", side_json(d, d.before)},
                   {"after", side_json(d, d.after)}});
  }
  return arr;
}

}  // namespace

std::string render_report(const DiffReport& report, Format format) {
  if (format == Format::Json) {
    nlohmann::json j;
    j["report_version"] = kReportVersion;
    j["kind"] = "diff";
    j["added_tus"] = report.added_tus;
    j["removed_tus"] = report.removed_tus;
    j["added_targets"] = report.added_targets;
    j["removed_targets"] = report.removed_targets;
    j["per_tu_changes"] = nlohmann::json::object();
    for (const auto& [id, d] : report.per_tu_changes) j["per_tu_changes"][id] = deltas_json(d);
    j["per_target_changes"] = nlohmann::json::object();
    for (const auto& [id, d] : report.per_target_changes) j["per_target_changes"][id] = deltas_json(d);
    j["notes"] = report.notes;
    j["summary"] = {{"added_tus", report.added_tus.size()},
                    {"removed_tus", report.removed_tus.size()},
                    {"changed_tus", report.per_tu_changes.size()},
                    {"added_targets", report.added_targets.size()},
                    {"removed_targets", report.removed_targets.size()},
                    {"changed_targets", report.per_target_changes.size()},
                    {"deltas", report.delta_count()}};
    return j.dump(2) + "\n";
  }

  if (report.empty()) {
    std::string out = "no differences\n";
    for (const auto& n : report.notes) out += "note: " + n + "\n";
    return out;
  }
  std::string out;
  // Targets first, then TUs; each section alphabetical.
  auto section = [&](std::string_view title, const std::vector<std::string>& added,
                     const std::vector<std::string>& removed,
                     const std::map<std::string, std::vector<FlagDelta>>& changed) {
    if (added.empty() && removed.empty() && changed.empty()) return;
    out += std::string(title) + ":\n";
    std::set<std::string> names(added.begin(), added.end());
    names.insert(removed.begin(), removed.end());
    for (const auto& [k, _] : changed) names.insert(k);
    for (const auto& name : names) {
      if (std::find(added.begin(), added.end(), name) != added.end()) {
        out += "  + " + name + "\n";
      } else if (std::find(removed.begin(), removed.end(), name) != removed.end()) {
        out += "  - " + name + "\n";
      } else {
        out += "  ~ " + name + "\n";
        render_deltas_text(out, changed.at(name));
      }
    }
  };
  section("targets", report.added_targets, report.removed_targets, report.per_target_changes);
  section("translation units", report.added_tus, report.removed_tus, report.per_tu_changes);
  for (const auto& n : report.notes) out += "note: " + n + "\n";
  out += "summary: " + std::to_string(report.added_tus.size()) + " TUs added, " +
         std::to_string(report.removed_tus.size()) + " removed, " +
         std::to_string(report.per_tu_changes.size()) + " changed; " +
         std::to_string(report.added_targets.size()) + " targets added, " +
         std::to_string(report.removed_targets.size()) + " removed, " +
         std::to_string(report.per_target_changes.size()) + " changed; " +
         std::to_string(report.delta_count()) + " flag deltas\n";
  return out;
}

}  // namespace flagtrace::diff
