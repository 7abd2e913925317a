#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "flagtrace/cmdline.hpp"
#include "flagtrace/error.hpp"
#include "flagtrace/report.hpp"
#include "flagtrace/snapshot.hpp"

namespace flagtrace::audit {

enum class Rule {
  R1_DebugInRelease,
  R2_OptInconsistent,
  R3_DupDependency,
  R4_MissingHardening,
  R5_ExceptionMismatch,
  R6_MacroTypo,  // produced by mklint, never by run_audit
  R7_LinkOrderDrift,
  R8_UnresolvedToken,
};

enum class Severity { Error, Warning, Info };

std::string_view to_string(Rule r);
std::string_view to_string(Severity s);
std::optional<Rule> rule_from_string(std::string_view s);

struct Evidence {
  cmdline::Provenance where;
  cmdline::TokenOrigin origin;
  std::string spelling;

  std::string describe() const;
};

struct AnomalyFinding {
  Rule rule = Rule::R1_DebugInRelease;
  Severity severity = Severity::Info;
  std::string subject;  // TU id, target output or makefile path
  std::vector<Evidence> evidence;
  std::string message;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

struct AuditConfig {
  std::set<Rule> enabled;
  std::set<std::string> release_labels;
  std::set<std::string> hardening_required;
  std::set<std::string> debug_markers;
  std::set<std::string> consistency_groups;  // groups R2 compares
  std::map<Rule, Severity> severity_overrides;

  static AuditConfig defaults();
  // Key-value document:
  //   version = 1
  //   rules = R1, R2, R4
  //   release_labels = release, official
  //   hardening_required = stack_protector
  //   debug_markers = DEBUG, _DEBUG, DEBUG_TRACING
  //   consistency_groups = opt_level
  //   severity.R3 = warning
  // Keys absent from the document keep their defaults.
  static AuditConfig parse(std::string_view document);
  static AuditConfig load(const std::filesystem::path& path);

  Severity severity_of(Rule rule) const;
};

Severity default_severity(Rule rule);

struct AuditResult {
  std::vector<AnomalyFinding> findings;  // ordered by rule, then subject
  // Rules that could not be evaluated, e.g. link rules on a snapshot
  // without link commands.
  std::vector<std::string> inconclusive;
};

AuditResult run_audit(const BuildSnapshot& snapshot, const BuildSnapshot* previous,
                      const AuditConfig& config = AuditConfig::defaults());

// 0 when nothing reaches Warning, 1 if any Error, 4 for warnings only.
int exit_code(const std::vector<AnomalyFinding>& findings);

std::string render_findings(const std::vector<AnomalyFinding>& findings,
                            const std::vector<std::string>& inconclusive, std::string_view kind,
                            Format format);

// Split of a library input into stem, version suffix and directory.
struct LibraryIdentity {
  std::string stem;
  std::string version;
  std::string directory;
};

LibraryIdentity library_identity(const flags::FlagEntry& input);

}  // namespace flagtrace::audit
