#include "flagtrace/audit.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <tuple>

#include "json.hpp"

#include "flagtrace/store.hpp"
#include "flagtrace/text.hpp"

namespace flagtrace::audit {

using flags::EffectiveFlagSet;
using flags::FlagEntry;
using flags::Polarity;
namespace keys = flags::keys;

namespace {

constexpr std::array kRuleNames = {
    std::pair{Rule::R1_DebugInRelease, std::string_view("R1_DebugInRelease")},
    std::pair{Rule::R2_OptInconsistent, std::string_view("R2_OptInconsistent")},
    std::pair{Rule::R3_DupDependency, std::string_view("R3_DupDependency")},
    std::pair{Rule::R4_MissingHardening, std::string_view("R4_MissingHardening")},
    std::pair{Rule::R5_ExceptionMismatch, std::string_view("R5_ExceptionMismatch")},
    std::pair{Rule::R6_MacroTypo, std::string_view("R6_MacroTypo")},
    std::pair{Rule::R7_LinkOrderDrift, std::string_view("R7_LinkOrderDrift")},
    std::pair{Rule::R8_UnresolvedToken, std::string_view("R8_UnresolvedToken")},
};

}  // namespace

std::string_view to_string(Rule r) {
  for (const auto& [rule, name] : kRuleNames) {
    if (rule == r) return name;
  }
  return "?";
}

std::string_view to_string(Severity s) {
  switch (s) {
    case Severity::Error: return "error";
    case Severity::Warning: return "warning";
    case Severity::Info: break;
  }
  return "info";
}

std::optional<Rule> rule_from_string(std::string_view s) {
  for (const auto& [rule, name] : kRuleNames) {
    if (s == name) return rule;
    // Short form "R4" / "r4".
    auto underscore = name.find('_');
    if (text::to_lower(s) == text::to_lower(name.substr(0, underscore))) return rule;
  }
  return std::nullopt;
}

std::string Evidence::describe() const {
  std::string out = where.describe();
  if (!origin.from_command_line()) {
    out += " (" + origin.response_file + " token " + std::to_string(origin.index) + ")";
  }
  return out;
}

Severity default_severity(Rule rule) {
  switch (rule) {
    case Rule::R4_MissingHardening: return Severity::Error;
    case Rule::R1_DebugInRelease:
    case Rule::R2_OptInconsistent:
    case Rule::R5_ExceptionMismatch:
    case Rule::R6_MacroTypo:
    case Rule::R7_LinkOrderDrift: return Severity::Warning;
    case Rule::R3_DupDependency:
    case Rule::R8_UnresolvedToken: break;
  }
  return Severity::Info;
}

AuditConfig AuditConfig::defaults() {
  AuditConfig c;
  for (const auto& [rule, _] : kRuleNames) {
    if (rule != Rule::R6_MacroTypo) c.enabled.insert(rule);
  }
  c.release_labels = {"release", "official", "official-release"};
  c.hardening_required = {std::string(keys::kStackProtector)};
  c.debug_markers = {"DEBUG", "_DEBUG", "DEBUG_TRACING"};
  c.consistency_groups = {std::string(keys::kOptLevel)};
  return c;
}

namespace {

std::set<std::string> split_list(std::string_view value) {
  std::set<std::string> out;
  std::size_t start = 0;
  while (start <= value.size()) {
    auto comma = value.find(',', start);
    auto item = text::trim(value.substr(start, comma == std::string_view::npos ? std::string_view::npos
                                                                              : comma - start));
    if (!item.empty()) out.emplace(item);
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

Rule parse_rule(std::string_view name, std::size_t line_no) {
  auto rule = rule_from_string(name);
  if (!rule) {
    throw ConfigError("config line " + std::to_string(line_no) + ": unknown rule '" + std::string(name) + "'");
  }
  return *rule;
}

}  // namespace

AuditConfig AuditConfig::parse(std::string_view document) {
  AuditConfig c = defaults();
  bool saw_version = false;
  std::size_t line_no = 0;
  for (const auto& raw : text::split_lines(document)) {
    ++line_no;
    auto line = text::trim(raw);
    if (line.empty() || line.front() == '#') continue;
    auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key = value");
    }
    auto key = text::trim(line.substr(0, eq));
    auto value = text::trim(line.substr(eq + 1));
    if (key == "version") {
      if (value != "1") throw ConfigError("unsupported config version '" + std::string(value) + "'");
      saw_version = true;
    } else if (key == "rules") {
      c.enabled.clear();
      for (const auto& name : split_list(value)) c.enabled.insert(parse_rule(name, line_no));
    } else if (key == "release_labels") {
      c.release_labels = split_list(value);
    } else if (key == "hardening_required") {
      c.hardening_required = split_list(value);
    } else if (key == "debug_markers") {
      c.debug_markers = split_list(value);
    } else if (key == "consistency_groups") {
      c.consistency_groups = split_list(value);
    } else if (key.starts_with("severity.")) {
      Rule rule = parse_rule(key.substr(9), line_no);
      if (value == "error") {
        c.severity_overrides[rule] = Severity::Error;
      } else if (value == "warning") {
        c.severity_overrides[rule] = Severity::Warning;
      } else if (value == "info") {
        c.severity_overrides[rule] = Severity::Info;
      } else {
        throw ConfigError("config line " + std::to_string(line_no) + ": unknown severity '" +
                          std::string(value) + "'");
      }
    } else {
      throw ConfigError("config line " + std::to_string(line_no) + ": unknown key '" + std::string(key) + "'");
    }
  }
  if (!saw_version) throw ConfigError("config is missing 'version = 1'");
  return c;
}

AuditConfig AuditConfig::load(const std::filesystem::path& path) {
  return parse(text::read_file(path));
}

Severity AuditConfig::severity_of(Rule rule) const {
  auto it = severity_overrides.find(rule);
  return it == severity_overrides.end() ? default_severity(rule) : it->second;
}

LibraryIdentity library_identity(const FlagEntry& input) {
  LibraryIdentity id;
  std::string name;
  bool searched = input.spelling.starts_with("-l");
  std::string value = input.value.value_or(input.canonical);
  if (searched && !value.starts_with(":")) {
    name = value;
  } else {
    if (value.starts_with(":")) value.erase(0, 1);
    auto slash = value.find_last_of("/\\");
    if (slash != std::string::npos) id.directory = value.substr(0, slash);
    name = std::string(text::basename(value));
    std::string so_version;
    bool gnu_style = true;
    if (auto so = name.find(".so."); so != std::string::npos) {
      so_version = name.substr(so + 4);
      name.resize(so);
    } else if (auto dot = name.rfind('.'); dot != std::string::npos && dot > 0) {
      auto ext = text::to_lower(std::string_view(name).substr(dot + 1));
      if (ext == "a" || ext == "so" || ext == "dylib" || ext == "lib") {
        gnu_style = ext != "lib";
        name.resize(dot);
      }
    }
    if (gnu_style && name.size() > 3 && name.starts_with("lib")) name.erase(0, 3);
    id.version = so_version;
  }
  // The version suffix is the longest tail made of digits, dots and hyphens
  // that starts right after a '-' or '.' followed by a digit.
  auto is_version_char = [](char c) { return std::isdigit(static_cast<unsigned char>(c)) || c == '.' || c == '-'; };
  for (std::size_t p = 1; p + 1 < name.size(); ++p) {
    if ((name[p] != '-' && name[p] != '.') || !std::isdigit(static_cast<unsigned char>(name[p + 1]))) continue;
    if (std::all_of(name.begin() + static_cast<std::ptrdiff_t>(p) + 1, name.end(), is_version_char)) {
      std::string v = name.substr(p + 1);
      id.version = id.version.empty() ? v : v + "." + id.version;
      name.resize(p);
      break;
    }
  }
  id.stem = name;
  return id;
}

namespace {

Evidence evidence_of(const cmdline::RawInvocation& inv, const FlagEntry& e) {
  return {inv.source, e.origin, e.spelling};
}

Evidence evidence_of_program(const cmdline::RawInvocation& inv, std::string note) {
  cmdline::TokenOrigin origin;
  if (!inv.tokens.empty()) origin = inv.tokens.front().origin;
  return {inv.source, origin, inv.program + " " + note};
}

bool is_release(const BuildSnapshot& s, const AuditConfig& c) { return c.release_labels.contains(s.label); }

std::vector<const TranslationUnitRecord*> members_of(const BuildSnapshot& s, const LinkTargetRecord& t) {
  std::vector<const TranslationUnitRecord*> out;
  for (const auto& id : t.member_tus) {
    if (const auto* tu = s.find_tu(id)) out.push_back(tu);
  }
  return out;
}

class Auditor {
 public:
  Auditor(const BuildSnapshot& snap, const BuildSnapshot* prev, const AuditConfig& config)
      : snap_(snap), prev_(prev), config_(config) {}

  AuditResult run() {
    if (enabled(Rule::R1_DebugInRelease)) debug_in_release();
    if (enabled(Rule::R2_OptInconsistent)) need_links(Rule::R2_OptInconsistent) && opt_inconsistent();
    if (enabled(Rule::R3_DupDependency)) need_links(Rule::R3_DupDependency) && duplicate_dependency();
    if (enabled(Rule::R4_MissingHardening)) missing_hardening();
    if (enabled(Rule::R5_ExceptionMismatch)) need_links(Rule::R5_ExceptionMismatch) && exception_mismatch();
    if (enabled(Rule::R7_LinkOrderDrift) && prev_) link_order_drift();
    if (enabled(Rule::R8_UnresolvedToken)) unresolved_tokens();
    std::stable_sort(result_.findings.begin(), result_.findings.end(),
                     [](const AnomalyFinding& a, const AnomalyFinding& b) {
                       return std::tie(a.rule, a.subject) < std::tie(b.rule, b.subject);
                     });
    return std::move(result_);
  }

 private:
  bool enabled(Rule r) const { return config_.enabled.contains(r); }

  bool need_links(Rule r) {
    if (!snap_.targets.empty()) return true;
    result_.inconclusive.push_back(std::string(to_string(r)) + ": snapshot has no link commands");
    return false;
  }

  void emit(Rule rule, std::string subject, std::vector<Evidence> evidence, std::string message) {
    result_.findings.push_back(
        {rule, config_.severity_of(rule), std::move(subject), std::move(evidence), std::move(message)});
  }

  void debug_in_release() {
    if (!is_release(snap_, config_)) return;
    bool any_ndebug = std::any_of(snap_.tus.begin(), snap_.tus.end(), [](const TranslationUnitRecord& tu) {
      auto it = tu.effective.defines.find("NDEBUG");
      return it != tu.effective.defines.end() && it->second.key == keys::kMacroDefine;
    });
    for (const auto& tu : snap_.tus) {
      std::vector<Evidence> ev;
      std::vector<std::string> why;
      for (const auto& [name, e] : tu.effective.defines) {
        if (e.key == keys::kMacroDefine && config_.debug_markers.contains(name)) {
          ev.push_back(evidence_of(tu.invocation, e));
          why.push_back("defines " + name);
        }
      }
      if (any_ndebug) {
        auto it = tu.effective.defines.find("NDEBUG");
        if (it == tu.effective.defines.end()) {
          ev.push_back(evidence_of_program(tu.invocation, "(no -DNDEBUG)"));
          why.push_back("lacks NDEBUG while other units define it");
        } else if (it->second.key == keys::kMacroUndef) {
          ev.push_back(evidence_of(tu.invocation, it->second));
          why.push_back("undefines NDEBUG while other units define it");
        }
      }
      if (ev.empty()) continue;
      std::string msg = "release build unit ";
      for (std::size_t i = 0; i < why.size(); ++i) msg += (i ? "; " : "") + why[i];
      emit(Rule::R1_DebugInRelease, tu.id, std::move(ev), std::move(msg));
    }
  }

  bool opt_inconsistent() {
    for (const auto& t : snap_.targets) {
      auto members = members_of(snap_, t);
      if (members.size() < 2) continue;
      for (const auto& group : config_.consistency_groups) {
        std::set<std::string> values;
        for (const auto* tu : members) values.insert(store::query_value(tu->effective, group));
        if (values.size() < 2) continue;
        std::vector<Evidence> ev;
        std::string detail;
        for (const auto* tu : members) {
          auto it = tu->effective.scalar_groups.find(group);
          if (it != tu->effective.scalar_groups.end()) {
            ev.push_back(evidence_of(tu->invocation, it->second));
          } else {
            ev.push_back(evidence_of_program(tu->invocation, "(no " + group + ")"));
          }
          detail += (detail.empty() ? "" : ", ") + tu->id + "=" + store::query_value(tu->effective, group);
        }
        emit(Rule::R2_OptInconsistent, t.output, std::move(ev),
             group + " differs across linked units: " + detail);
      }
    }
    return true;
  }

  bool duplicate_dependency() {
    for (const auto& t : snap_.targets) {
      std::map<std::string, std::vector<std::pair<LibraryIdentity, const FlagEntry*>>> by_stem;
      for (const auto& e : t.effective.link_inputs) {
        if (e.key != keys::kLinkLib) continue;
        auto id = library_identity(e);
        by_stem[id.stem].emplace_back(id, &e);
      }
      for (const auto& [stem, libs] : by_stem) {
        bool conflict = false;
        for (std::size_t i = 0; i < libs.size() && !conflict; ++i) {
          for (std::size_t j = i + 1; j < libs.size() && !conflict; ++j) {
            const auto& a = libs[i].first;
            const auto& b = libs[j].first;
            bool version_differs = a.version != b.version;
            bool path_differs = !a.directory.empty() && !b.directory.empty() && a.directory != b.directory;
            conflict = version_differs || path_differs;
          }
        }
        if (!conflict) continue;
        std::vector<Evidence> ev;
        std::string detail;
        for (const auto& [_, e] : libs) {
          ev.push_back(evidence_of(t.invocation, *e));
          detail += (detail.empty() ? "" : ", ") + e->canonical;
        }
        emit(Rule::R3_DupDependency, t.output, std::move(ev),
             "library '" + stem + "' linked in more than one version or location: " + detail);
      }
    }
    return true;
  }

  void missing_hardening() {
    if (!is_release(snap_, config_)) return;
    for (const auto& tu : snap_.tus) {
      for (const auto& group : config_.hardening_required) {
        auto it = tu.effective.scalar_groups.find(group);
        if (it == tu.effective.scalar_groups.end()) {
          emit(Rule::R4_MissingHardening, tu.id, {evidence_of_program(tu.invocation, "(no " + group + " flag)")},
               "release build unit has no " + group + " hardening flag");
        } else if (it->second.polarity == Polarity::Negative) {
          emit(Rule::R4_MissingHardening, tu.id, {evidence_of(tu.invocation, it->second)},
               "release build unit disables " + group + " hardening with " + it->second.canonical);
        }
      }
    }
  }

  bool exception_mismatch() {
    for (const auto& t : snap_.targets) {
      auto members = members_of(snap_, t);
      std::vector<const TranslationUnitRecord*> off, on;
      for (const auto* tu : members) {
        auto it = tu->effective.scalar_groups.find(std::string(keys::kExceptions));
        bool negative = it != tu->effective.scalar_groups.end() && it->second.polarity == Polarity::Negative;
        (negative ? off : on).push_back(tu);
      }
      if (off.empty() || on.empty()) continue;
      std::vector<Evidence> ev;
      std::string disabled, enabled_list;
      for (const auto* tu : off) {
        ev.push_back(evidence_of(tu->invocation, tu->effective.scalar_groups.at(std::string(keys::kExceptions))));
        disabled += (disabled.empty() ? "" : ", ") + tu->id;
      }
      for (const auto* tu : on) {
        auto it = tu->effective.scalar_groups.find(std::string(keys::kExceptions));
        ev.push_back(it != tu->effective.scalar_groups.end()
                         ? evidence_of(tu->invocation, it->second)
                         : evidence_of_program(tu->invocation, "(exceptions default)"));
        enabled_list += (enabled_list.empty() ? "" : ", ") + tu->id;
      }
      emit(Rule::R5_ExceptionMismatch, t.output, std::move(ev),
           "exception handling disabled in " + disabled + " but enabled in " + enabled_list);
    }
    return true;
  }

  void link_order_drift() {
    if (snap_.targets.empty() || prev_->targets.empty()) {
      result_.inconclusive.push_back(std::string(to_string(Rule::R7_LinkOrderDrift)) +
                                     ": a compared snapshot has no link commands");
      return;
    }
    for (const auto& t : snap_.targets) {
      const auto* before = prev_->find_target(t.output);
      if (!before || before->inputs == t.inputs) continue;
      auto a = before->inputs, b = t.inputs;
      std::sort(a.begin(), a.end());
      std::sort(b.begin(), b.end());
      if (a != b) continue;  // set changes belong to diff
      std::vector<Evidence> ev;
      for (const auto& e : t.effective.link_inputs) ev.push_back(evidence_of(t.invocation, e));
      if (ev.empty()) ev.push_back(evidence_of_program(t.invocation, "(link inputs)"));
      auto join = [](const std::vector<std::string>& v) {
        std::string s;
        for (const auto& x : v) s += (s.empty() ? "" : " ") + x;
        return s;
      };
      emit(Rule::R7_LinkOrderDrift, t.output, std::move(ev),
           "link input order changed from [" + join(before->inputs) + "] to [" + join(t.inputs) + "]");
    }
  }

  static bool unresolved(std::string_view s) {
    for (std::size_t i = 0; i + 1 < s.size(); ++i) {
      char c = s[i], n = s[i + 1];
      if (c == '$' && (n == '(' || n == '{' || n == '_' || std::isalpha(static_cast<unsigned char>(n)))) return true;
      if (c == '%' && (n == '_' || std::isalpha(static_cast<unsigned char>(n)))) {
        std::size_t j = i + 1;
        while (j < s.size() && (std::isalnum(static_cast<unsigned char>(s[j])) || s[j] == '_')) ++j;
        if (j < s.size() && s[j] == '%') return true;
      }
    }
    return false;
  }

  void unresolved_tokens() {
    for (const auto& tu : snap_.tus) {
      std::vector<Evidence> ev;
      for (const auto& tok : tu.invocation.tokens) {
        if (unresolved(tok.text)) ev.push_back({tu.invocation.source, tok.origin, tok.text});
      }
      if (ev.empty()) continue;
      std::string msg = "unexpanded variable reference";
      if (ev.size() > 1) msg += "s";
      msg += ": ";
      for (std::size_t i = 0; i < ev.size(); ++i) msg += (i ? " " : "") + ev[i].spelling;
      emit(Rule::R8_UnresolvedToken, tu.id, std::move(ev), std::move(msg));
    }
  }

  const BuildSnapshot& snap_;
  const BuildSnapshot* prev_;
  const AuditConfig& config_;
  AuditResult result_;
};

}  // namespace

AuditResult run_audit(const BuildSnapshot& snapshot, const BuildSnapshot* previous, const AuditConfig& config) {
  return Auditor(snapshot, previous, config).run();
}

int exit_code(const std::vector<AnomalyFinding>& findings) {
  bool warning = false;
  for (const auto& f : findings) {
    if (f.severity == Severity::Error) return 1;
    if (f.severity == Severity::Warning) warning = true;
  }
  return warning ? 4 : 0;
}

std::string render_findings(const std::vector<AnomalyFinding>& findings,
                            const std::vector<std::string>& inconclusive, std::string_view kind,
                            Format format) {
  std::size_t counts[3] = {0, 0, 0};
  for (const auto& f : findings) ++counts[static_cast<int>(f.severity)];
  if (format == Format::Json) {
    nlohmann::json j;
    j["report_version"] = kReportVersion;
    j["kind"] = kind;
    j["findings"] = nlohmann::json::array();
    for (const auto& f : findings) {
      auto ev = nlohmann::json::array();
      for (const auto& e : f.evidence) ev.push_back({{"provenance", e.describe()}, {"spelling", e.spelling}});
      j["findings"].push_back({{"rule", to_string(f.rule)},
                               {"severity", to_string(f.severity)},
                               {"subject", f.subject},
                               {"message", f.message},
                               {"evidence", ev}});
    }
    j["inconclusive"] = inconclusive;
    j["summary"] = {{"errors", counts[0]}, {"warnings", counts[1]}, {"info", counts[2]}};
    return j.dump(2) + "\n";
  }
  std::string out;
  if (findings.empty()) out += "no findings\n";
  for (const auto& f : findings) {
    out += std::string(to_string(f.severity)) + " " + std::string(to_string(f.rule)) + " " + f.subject + ": " +
           f.message + "\n";
    for (const auto& e : f.evidence) out += "    at " + e.describe() + ": " + e.spelling + "\n";
  }
  for (const auto& i : inconclusive) out += "inconclusive: " + i + "\n";
  if (!findings.empty()) {
    out += "summary: " + std::to_string(counts[0]) + " errors, " + std::to_string(counts[1]) + " warnings, " +
           std::to_string(counts[2]) + " info\n";
  }
  return out;
}

}  // namespace flagtrace::audit
