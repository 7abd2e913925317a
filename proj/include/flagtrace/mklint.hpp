#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "flagtrace/report.hpp"

namespace flagtrace::mklint {

enum class AssignOp {
  Recursive,    // =
  Simple,       // := and ::=
  Append,       // +=
  Conditional,  // ?=
  Shell,        // !=
};

std::string_view to_string(AssignOp op);

struct MacroAssignment {
  std::string name;
  AssignOp op = AssignOp::Recursive;
  std::string file;
  std::size_t line = 0;
  std::string value_text;

  friend bool operator==(const MacroAssignment&, const MacroAssignment&) = default;
};

struct ScanDiagnostic {
  std::string file;
  std::size_t line = 0;
  std::string message;
};

struct ScanResult {
  std::vector<MacroAssignment> assignments;
  std::set<std::string> expansions;
  std::vector<ScanDiagnostic> diagnostics;
  std::vector<std::string> files;  // every file read, includes last

  void merge(ScanResult other);
};

// Lexical scan. Conditionals are not evaluated, so assignments in both
// branches are reported. `include` is followed one level deep relative to
// the including file. Only an unreadable top-level file throws (IoError).
ScanResult scan_makefile(const std::filesystem::path& path);

// Scans in-memory text; `file` labels diagnostics and assignments. Includes
// resolve against `base_dir` when follow_includes is set.
ScanResult scan_text(std::string_view content, std::string file, const std::filesystem::path& base_dir = {},
                     bool follow_includes = false);

// Valid makefile variable name: non-empty, no whitespace, none of ":#=".
bool valid_name(std::string_view name);

std::size_t levenshtein(std::string_view a, std::string_view b);

const std::set<std::string>& builtin_vocabulary();

inline constexpr std::size_t kDefaultThreshold = 2;

struct LintFinding {
  std::string file;
  std::string name;
  std::size_t line = 0;
  std::string suggestion;
  std::size_t distance = 0;

  friend bool operator==(const LintFinding&, const LintFinding&) = default;
};

// Findings ordered by (file, line). The suggestion is the nearest word;
// ties go to the longest shared prefix, then lexicographic order.
std::vector<LintFinding> lint(const std::vector<MacroAssignment>& assignments,
                              const std::set<std::string>& expansions, const std::set<std::string>& vocabulary,
                              std::size_t threshold = kDefaultThreshold);

std::string render_findings(const std::vector<LintFinding>& findings, const std::vector<ScanDiagnostic>& diagnostics,
                            Format format);

}  // namespace flagtrace::mklint
