#include "flagtrace/mklint.hpp"

#include <algorithm>
#include <cctype>
#include <optional>
#include <tuple>

#include "json.hpp"

#include "flagtrace/error.hpp"
#include "flagtrace/text.hpp"

namespace flagtrace::mklint {

namespace fs = std::filesystem;

std::string_view to_string(AssignOp op) {
  switch (op) {
    case AssignOp::Recursive: return "=";
    case AssignOp::Simple: return ":=";
    case AssignOp::Append: return "+=";
    case AssignOp::Conditional: return "?=";
    case AssignOp::Shell: return "!=";
  }
  return "?";
}

void ScanResult::merge(ScanResult other) {
  for (auto& a : other.assignments) assignments.push_back(std::move(a));
  expansions.merge(other.expansions);
  for (auto& d : other.diagnostics) diagnostics.push_back(std::move(d));
  for (auto& f : other.files) files.push_back(std::move(f));
}

bool valid_name(std::string_view name) {
  if (name.empty()) return false;
  return std::none_of(name.begin(), name.end(), [](char c) {
    return std::isspace(static_cast<unsigned char>(c)) || c == ':' || c == '#' || c == '=';
  });
}

namespace {

bool is_space(char c) { return c == ' ' || c == '\t'; }

// Records every variable referenced in `s`. Function calls such as
// $(filter-out ...) record the function word too, which is harmless: it
// can only suppress findings, never add them.
void collect_expansions(std::string_view s, std::set<std::string>& out) {
  for (std::size_t i = 0; i + 1 < s.size(); ++i) {
    if (s[i] != '$') continue;
    char n = s[i + 1];
    if (n == '$') {
      ++i;
      continue;
    }
    if (n == '(' || n == '{') {
      char close = n == '(' ? ')' : '}';
      std::size_t j = i + 2;
      while (j < s.size() && !is_space(s[j]) && s[j] != ':' && s[j] != close && s[j] != ',' && s[j] != '$') ++j;
      if (j > i + 2) out.emplace(s.substr(i + 2, j - i - 2));
      i = i + 1;  // keep scanning inside for nested references
      continue;
    }
    if (!is_space(n)) out.emplace(1, n);
    ++i;
  }
}

// Strips an unescaped '#' comment.
std::string strip_comment(std::string_view line) {
  std::string out;
  for (std::size_t i = 0; i < line.size(); ++i) {
    if (line[i] == '\\' && i + 1 < line.size() && line[i + 1] == '#') {
      out += '#';
      ++i;
      continue;
    }
    if (line[i] == '#') break;
    out += line[i];
  }
  return out;
}

struct Logical {
  std::size_t line;
  std::string text;
};

std::vector<Logical> join_continuations(std::string_view content) {
  std::vector<Logical> out;
  auto lines = text::split_lines(content);
  for (std::size_t i = 0; i < lines.size(); ++i) {
    Logical l{i + 1, lines[i]};
    while (!l.text.empty() && l.text.back() == '\\' && i + 1 < lines.size()) {
      l.text.pop_back();
      l.text += ' ';
      l.text += text::trim(lines[++i]);
    }
    out.push_back(std::move(l));
  }
  return out;
}

bool starts_with_word(std::string_view s, std::string_view word) {
  return s.starts_with(word) && (s.size() == word.size() || is_space(s[word.size()]));
}

std::string_view after_word(std::string_view s, std::string_view word) { return text::trim(s.substr(word.size())); }

struct Split {
  std::size_t op_begin = std::string_view::npos;
  std::size_t op_end = 0;
  AssignOp op = AssignOp::Recursive;
  std::size_t colon = std::string_view::npos;  // first depth-0 ':' not part of the operator
};

// Finds the first depth-0 assignment operator and the first depth-0 rule
// colon preceding it.
Split find_operator(std::string_view s) {
  Split sp;
  int depth = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    char c = s[i];
    if (c == '$' && i + 1 < s.size() && (s[i + 1] == '(' || s[i + 1] == '{')) {
      ++depth;
      ++i;
      continue;
    }
    if (depth > 0) {
      if (c == '(' || c == '{') ++depth;
      if (c == ')' || c == '}') --depth;
      continue;
    }
    if (c == '=') {
      sp.op_end = i + 1;
      sp.op_begin = i;
      if (i > 0) {
        char p = s[i - 1];
        if (p == '+') sp.op = AssignOp::Append, sp.op_begin = i - 1;
        if (p == '?') sp.op = AssignOp::Conditional, sp.op_begin = i - 1;
        if (p == '!') sp.op = AssignOp::Shell, sp.op_begin = i - 1;
        if (p == ':') {
          sp.op = AssignOp::Simple;
          sp.op_begin = (i > 1 && s[i - 2] == ':') ? i - 2 : i - 1;
          if (sp.colon >= sp.op_begin) sp.colon = std::string_view::npos;
        }
      }
      return sp;
    }
    if (c == ':' && sp.colon == std::string_view::npos) sp.colon = i;
  }
  sp.op_begin = std::string_view::npos;
  return sp;
}

std::string_view strip_modifiers(std::string_view lhs) {
  for (bool again = true; again;) {
    again = false;
    for (std::string_view m : {"export", "override", "private", "unexport"}) {
      if (starts_with_word(lhs, m)) {
        lhs = after_word(lhs, m);
        again = true;
      }
    }
  }
  return lhs;
}

std::vector<std::string> split_words(std::string_view s) {
  std::vector<std::string> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && is_space(s[i])) ++i;
    std::size_t j = i;
    while (j < s.size() && !is_space(s[j])) ++j;
    if (j > i) out.emplace_back(s.substr(i, j - i));
    i = j;
  }
  return out;
}

class Scanner {
 public:
  Scanner(std::string file, fs::path base_dir, bool follow_includes)
      : file_(std::move(file)), base_dir_(std::move(base_dir)), follow_(follow_includes) {
    result_.files.push_back(file_);
  }

  ScanResult run(std::string_view content) {
    auto lines = join_continuations(content);
    for (std::size_t i = 0; i < lines.size(); ++i) {
      const auto& l = lines[i];
      if (define_) {
        handle_define_body(l);
        continue;
      }
      if (!l.text.empty() && l.text.front() == '\t' && in_rule_) {
        collect_expansions(l.text, result_.expansions);
        continue;
      }
      handle_line(l);
    }
    if (define_) diag(define_->line, "unterminated define '" + define_->name + "'");
    return std::move(result_);
  }

 private:
  void diag(std::size_t line, std::string msg) { result_.diagnostics.push_back({file_, line, std::move(msg)}); }

  void handle_define_body(const Logical& l) {
    auto t = text::trim(l.text);
    if (starts_with_word(t, "endef")) {
      result_.assignments.push_back(std::move(*define_));
      define_.reset();
      return;
    }
    collect_expansions(l.text, result_.expansions);
    if (!define_->value_text.empty()) define_->value_text += '\n';
    define_->value_text += l.text;
  }

  void handle_line(const Logical& l) {
    std::string stripped = strip_comment(l.text);
    auto t = text::trim(stripped);
    if (t.empty()) return;

    for (std::string_view cond : {"ifeq", "ifneq"}) {
      if (starts_with_word(t, cond) || (t.starts_with(cond) && t.size() > cond.size() && t[cond.size()] == '(')) {
        collect_expansions(t, result_.expansions);
        return;
      }
    }
    for (std::string_view cond : {"ifdef", "ifndef"}) {
      if (starts_with_word(t, cond)) {
        // Testing a variable counts as reading it.
        auto rest = after_word(t, cond);
        if (valid_name(rest)) result_.expansions.emplace(rest);
        collect_expansions(rest, result_.expansions);
        return;
      }
    }
    if (starts_with_word(t, "else") || starts_with_word(t, "endif")) return;

    for (std::string_view inc : {"include", "-include", "sinclude"}) {
      if (starts_with_word(t, inc)) {
        in_rule_ = false;
        handle_include(l.line, after_word(t, inc), inc != "include");
        return;
      }
    }
    for (std::string_view word : {"vpath", "undefine", "unexport"}) {
      if (starts_with_word(t, word)) {
        collect_expansions(t, result_.expansions);
        return;
      }
    }

    auto mod = strip_modifiers(t);
    if (starts_with_word(mod, "define")) {
      in_rule_ = false;
      auto rest = after_word(mod, "define");
      MacroAssignment a{"", AssignOp::Recursive, file_, l.line, ""};
      auto sp = find_operator(rest);
      std::string_view name = rest;
      if (sp.op_begin != std::string_view::npos && sp.op_end == rest.size()) {
        name = text::trim(rest.substr(0, sp.op_begin));
        a.op = sp.op;
      }
      if (!valid_name(name)) {
        diag(l.line, "malformed define directive");
        name = "?";
      }
      a.name = std::string(name);
      define_ = std::move(a);
      return;
    }
    if (starts_with_word(mod, "endef")) {
      diag(l.line, "endef without define");
      return;
    }

    auto sp = find_operator(mod);
    if (sp.op_begin == std::string_view::npos) {
      if (sp.colon != std::string_view::npos) {
        in_rule_ = true;  // rule line
        collect_expansions(mod, result_.expansions);
        return;
      }
      // A bare `export NAME` is fine; anything else is not make syntax we know.
      if (mod.size() != t.size() && valid_name(mod)) return;
      if (t.starts_with("$(") || t.starts_with("${")) {
        collect_expansions(t, result_.expansions);  // e.g. $(eval ...) or $(info ...)
        return;
      }
      diag(l.line, "unrecognized line: " + std::string(t));
      return;
    }

    std::string_view lhs = mod.substr(0, sp.op_begin);
    std::string_view value = text::trim(mod.substr(sp.op_end));
    if (sp.colon != std::string_view::npos) {
      // Target-specific: `targets: [export|override] NAME op value`.
      collect_expansions(lhs.substr(0, sp.colon), result_.expansions);
      lhs = strip_modifiers(text::trim(lhs.substr(sp.colon + 1)));
      in_rule_ = true;
    } else {
      in_rule_ = false;
    }
    auto name = text::trim(lhs);
    collect_expansions(value, result_.expansions);
    if (name.find('$') != std::string_view::npos) {
      collect_expansions(name, result_.expansions);  // computed name; cannot lint
      return;
    }
    if (!valid_name(name)) {
      diag(l.line, "malformed assignment: '" + std::string(name) + "' is not a variable name");
      return;
    }
    result_.assignments.push_back({std::string(name), sp.op, file_, l.line, std::string(value)});
  }

  void handle_include(std::size_t line, std::string_view rest, bool optional) {
    collect_expansions(rest, result_.expansions);
    if (!follow_) return;
    for (const auto& word : split_words(rest)) {
      if (word.find('$') != std::string::npos) {
        diag(line, "include path '" + word + "' needs expansion; not followed");
        continue;
      }
      fs::path p = fs::path(word).is_absolute() ? fs::path(word) : base_dir_ / word;
      std::string body;
      try {
        body = text::read_file(p);
      } catch (const IoError&) {
        if (!optional) diag(line, "cannot read included file " + p.generic_string());
        continue;
      }
      // One level deep: included files do not follow their own includes.
      result_.merge(Scanner(p.generic_string(), p.parent_path(), false).run(body));
    }
  }

  std::string file_;
  fs::path base_dir_;
  bool follow_;
  bool in_rule_ = false;
  std::optional<MacroAssignment> define_;
  ScanResult result_;
};

}  // namespace

ScanResult scan_text(std::string_view content, std::string file, const fs::path& base_dir, bool follow_includes) {
  return Scanner(std::move(file), base_dir, follow_includes).run(content);
}

ScanResult scan_makefile(const fs::path& path) {
  std::string body = text::read_file(path);
  return scan_text(body, path.generic_string(), path.parent_path(), true);
}

std::size_t levenshtein(std::string_view a, std::string_view b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

const std::set<std::string>& builtin_vocabulary() {
  static const std::set<std::string> v = {"CFLAGS",  "CXXFLAGS", "CPPFLAGS", "LDFLAGS", "LDLIBS",
                                          "ASFLAGS", "ARFLAGS",  "YFLAGS",   "LFLAGS"};
  return v;
}

namespace {

std::size_t common_prefix(std::string_view a, std::string_view b) {
  std::size_t n = 0;
  while (n < a.size() && n < b.size() && a[n] == b[n]) ++n;
  return n;
}

}  // namespace

std::vector<LintFinding> lint(const std::vector<MacroAssignment>& assignments,
                              const std::set<std::string>& expansions, const std::set<std::string>& vocabulary,
                              std::size_t threshold) {
  std::vector<LintFinding> out;
  for (const auto& a : assignments) {
    if (vocabulary.contains(a.name) || expansions.contains(a.name)) continue;
    std::size_t best = threshold + 1;
    std::size_t best_prefix = 0;
    std::string suggestion;
    // Equal distances prefer the longer shared prefix (CXFLAGS is one edit
    // from both CFLAGS and CXXFLAGS), then lexicographic order, which the
    // set iteration order gives for free.
    for (const auto& word : vocabulary) {
      auto d = levenshtein(a.name, word);
      auto prefix = common_prefix(a.name, word);
      if (d < best || (d == best && prefix > best_prefix)) {
        best = d;
        best_prefix = prefix;
        suggestion = word;
      }
    }
    if (suggestion.empty()) continue;
    out.push_back({a.file, a.name, a.line, suggestion, best});
  }
  std::stable_sort(out.begin(), out.end(), [](const LintFinding& x, const LintFinding& y) {
    return std::tie(x.file, x.line) < std::tie(y.file, y.line);
  });
  return out;
}

std::string render_findings(const std::vector<LintFinding>& findings, const std::vector<ScanDiagnostic>& diagnostics,
                            Format format) {
  if (format == Format::Json) {
    nlohmann::json j;
    j["report_version"] = kReportVersion;
    j["kind"] = "lint";
    j["findings"] = nlohmann::json::array();
    for (const auto& f : findings) {
      std::string where = f.file + ":" + std::to_string(f.line);
      j["findings"].push_back({{"rule", "R6_MacroTypo"},
                               {"severity", "warning"},
                               {"subject", f.file},
                               {"message", f.name + " is assigned but never read; did you mean " + f.suggestion + "?"},
                               {"evidence", {{{"provenance", where}, {"spelling", f.name}}}},
                               {"name", f.name},
                               {"line", f.line},
                               {"suggestion", f.suggestion},
                               {"distance", f.distance}});
    }
    j["diagnostics"] = nlohmann::json::array();
    for (const auto& d : diagnostics) {
      j["diagnostics"].push_back({{"file", d.file}, {"line", d.line}, {"message", d.message}});
    }
    j["summary"] = {{"errors", 0}, {"warnings", findings.size()}, {"info", 0}};
    return j.dump(2) + "\n";
  }
  std::string out;
  for (const auto& f : findings) {
    out += f.file + ":" + std::to_string(f.line) + ": warning R6_MacroTypo: " + f.name +
           " is assigned but never read; did you mean " + f.suggestion + "? (distance " +
           std::to_string(f.distance) + ")\n";
  }
  if (findings.empty()) out += "no findings\n";
  return out;
}

}  // namespace flagtrace::mklint
