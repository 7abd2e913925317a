#include "flagtrace/ingest.hpp"

#include <algorithm>
#include <cctype>
#include <functional>
#include <map>
#include <regex>
#include <set>
#include <tuple>

#include "json.hpp"

#include "flagtrace/text.hpp"

namespace flagtrace::ingest {

using cmdline::Dialect;
using cmdline::Family;
using cmdline::Provenance;
using cmdline::RawInvocation;
using cmdline::SourceKind;
using cmdline::Token;
using cmdline::ToolKind;
using flags::FlagEntry;
namespace keys = flags::keys;
using json = nlohmann::json;

namespace {

const std::set<std::string, std::less<>> kLaunchers = {"ccache", "sccache", "distcc", "icecc",
                                                       "buildcache"};

bool is_launcher(std::string_view word) {
  auto name = text::to_lower(text::basename(word));
  if (name.ends_with(".exe")) name.resize(name.size() - 4);
  return kLaunchers.contains(name);
}

// First shell word of a raw line, honoring a leading double quote so that
// "C:\Program Files\...\cl.exe" survives. Returns the word and the offset
// just past it.
std::pair<std::string, std::size_t> first_word(std::string_view line) {
  std::size_t i = 0;
  while (i < line.size() && (line[i] == ' ' || line[i] == '\t')) ++i;
  if (i < line.size() && line[i] == '"') {
    auto close = line.find('"', i + 1);
    if (close == std::string_view::npos) return {std::string(line.substr(i + 1)), line.size()};
    return {std::string(line.substr(i + 1, close - i - 1)), close + 1};
  }
  std::size_t start = i;
  while (i < line.size() && line[i] != ' ' && line[i] != '\t') ++i;
  return {std::string(line.substr(start, i - start)), i};
}

void truncate_at_shell_operator(std::vector<Token>& tokens) {
  static const std::set<std::string, std::less<>> kOps = {"&&", "||", ";", "|"};
  auto it = std::find_if(tokens.begin(), tokens.end(),
                         [](const Token& t) { return kOps.contains(t.text); });
  tokens.erase(it, tokens.end());
}

std::vector<Token> maybe_expand(std::vector<Token> tokens, const std::string& cwd, Dialect dialect,
                                const ParseOptions& options, const Provenance& where,
                                std::vector<Diagnostic>* diagnostics) {
  if (!options.expand_response_files) return tokens;
  bool any = std::any_of(tokens.begin(), tokens.end(),
                         [](const Token& t) { return t.text.size() > 1 && t.text[0] == '@'; });
  if (!any) return tokens;
  try {
    return cmdline::expand_response_files(tokens, cwd.empty() ? "." : cwd, dialect);
  } catch (const cmdline::CmdlineError& e) {
    if (diagnostics) {
      diagnostics->push_back({where, std::string("response file left unexpanded: ") + e.what()});
    }
    return tokens;
  }
}

std::string join_continuations(const std::vector<std::string>& lines, std::size_t& i) {
  std::string joined = lines[i];
  while (!joined.empty() && joined.back() == '\\' && i + 1 < lines.size()) {
    joined.pop_back();
    joined += lines[++i];
  }
  return joined;
}

}  // namespace

std::vector<RawInvocation> parse_raw_log_text(std::string_view content, std::string locator,
                                              const ParseOptions& options,
                                              std::vector<Diagnostic>* diagnostics) {
  static const std::regex kEntering(R"(^\S*make(\[\d+\])?: Entering directory [`'](.*)'\s*$)");
  static const std::regex kLeaving(R"(^\S*make(\[\d+\])?: Leaving directory [`'](.*)'\s*$)");
  static const std::regex kProgress(R"(^\s*\[\d+/\d+\]\s+)");

  std::vector<RawInvocation> out;
  auto lines = text::split_lines(text::utf8_lossy(content));
  std::vector<std::string> dir_stack;

  for (std::size_t i = 0; i < lines.size(); ++i) {
    const std::size_t line_no = i + 1;
    std::string line = join_continuations(lines, i);
    std::smatch m;
    if (std::regex_match(line, m, kEntering)) {
      dir_stack.push_back(m[2].str());
      continue;
    }
    if (std::regex_match(line, m, kLeaving)) {
      if (!dir_stack.empty()) dir_stack.pop_back();
      continue;
    }
    if (std::regex_search(line, m, kProgress)) line = m.suffix().str();

    std::string cwd = dir_stack.empty() ? options.default_cwd : dir_stack.back();
    std::string_view rest = line;
    Provenance where{SourceKind::RawLog, locator, line_no};

    // "cd dir && cmd" as emitted by CMake's Makefile generator.
    auto [word, end] = first_word(rest);
    if (word == "cd") {
      auto amp = rest.find("&&");
      if (amp == std::string_view::npos) continue;
      try {
        auto cd = cmdline::tokenize(rest.substr(0, amp), Dialect{});
        if (cd.size() >= 2) cwd = text::normalize_path(cwd, cd[1].text);
      } catch (const cmdline::CmdlineError&) {
        continue;
      }
      rest = rest.substr(amp + 2);
      std::tie(word, end) = first_word(rest);
    }
    while (!word.empty() && is_launcher(word)) {
      rest = rest.substr(end);
      std::tie(word, end) = first_word(rest);
    }
    if (word.empty()) continue;
    Dialect dialect = cmdline::detect_dialect(word);
    if (dialect.tool_kind == ToolKind::Unknown) continue;

    std::vector<Token> tokens;
    try {
      tokens = cmdline::tokenize(rest, dialect);
    } catch (const cmdline::CmdlineError& e) {
      if (diagnostics) diagnostics->push_back({where, std::string("skipped: ") + e.what()});
      continue;
    }
    truncate_at_shell_operator(tokens);
    if (tokens.empty()) continue;
    tokens = maybe_expand(std::move(tokens), cwd, dialect, options, where, diagnostics);
    auto inv = cmdline::make_invocation(std::move(tokens), cwd, where);
    inv.dialect = dialect;
    out.push_back(std::move(inv));
  }
  return out;
}

std::vector<RawInvocation> parse_raw_log(const std::filesystem::path& path, const ParseOptions& options,
                                         std::vector<Diagnostic>* diagnostics) {
  return parse_raw_log_text(text::read_file(path), path.generic_string(), options, diagnostics);
}

std::vector<RawInvocation> parse_compilation_db_text(std::string_view json_text, std::string locator,
                                                     const ParseOptions& options,
                                                     std::vector<Diagnostic>* diagnostics) {
  auto malformed = [&](const std::string& reason, std::size_t index) {
    return IngestError(IngestError::Kind::MalformedDb,
                       locator + ": entry " + std::to_string(index) + ": " + reason);
  };
  json doc;
  try {
    doc = json::parse(json_text);
  } catch (const json::parse_error& e) {
    throw malformed(std::string("invalid JSON: ") + e.what(), 0);
  }
  if (!doc.is_array()) throw malformed("top level is not an array", 0);

  std::vector<RawInvocation> out;
  for (std::size_t idx = 0; idx < doc.size(); ++idx) {
    const auto& entry = doc[idx];
    if (!entry.is_object()) throw malformed("not an object", idx);
    auto dir = entry.find("directory");
    if (dir == entry.end() || !dir->is_string()) throw malformed("missing directory", idx);
    auto file = entry.find("file");
    if (file == entry.end() || !file->is_string()) throw malformed("missing file", idx);
    Provenance where{SourceKind::CompilationDb, locator, idx};
    std::string cwd = text::normalize_path("", dir->get<std::string>());

    std::vector<Token> tokens;
    Dialect dialect;
    if (auto args = entry.find("arguments"); args != entry.end()) {
      if (!args->is_array() || args->empty()) throw malformed("arguments must be a non-empty array", idx);
      for (const auto& a : *args) {
        if (!a.is_string()) throw malformed("non-string argument", idx);
        auto s = a.get<std::string>();
        if (!s.empty()) tokens.push_back(Token{std::move(s), {}});
      }
      while (tokens.size() > 1 && is_launcher(tokens.front().text)) tokens.erase(tokens.begin());
      if (tokens.empty()) throw malformed("arguments are all empty", idx);
      dialect = cmdline::detect_dialect(tokens.front().text);
    } else if (auto cmd = entry.find("command"); cmd != entry.end()) {
      if (!cmd->is_string()) throw malformed("command must be a string", idx);
      std::string command = cmd->get<std::string>();
      std::string_view rest = command;
      auto [word, end] = first_word(rest);
      while (!word.empty() && is_launcher(word)) {
        rest = rest.substr(end);
        std::tie(word, end) = first_word(rest);
      }
      dialect = cmdline::detect_dialect(word.empty() ? "cc" : word);
      try {
        tokens = cmdline::tokenize(rest, dialect);
      } catch (const cmdline::CmdlineError& e) {
        throw malformed(e.what(), idx);
      }
      if (tokens.empty()) throw malformed("empty command", idx);
    } else {
      throw malformed("neither command nor arguments", idx);
    }
    tokens = maybe_expand(std::move(tokens), cwd, dialect, options, where, diagnostics);
    auto inv = cmdline::make_invocation(std::move(tokens), cwd, where);
    inv.dialect = dialect;
    out.push_back(std::move(inv));
  }
  return out;
}

std::vector<RawInvocation> parse_compilation_db(const std::filesystem::path& path,
                                                const ParseOptions& options,
                                                std::vector<Diagnostic>* diagnostics) {
  return parse_compilation_db_text(text::read_file(path), path.generic_string(), options, diagnostics);
}

std::optional<std::int64_t> parse_rfc3339(std::string_view ts) {
  auto digits = [&](std::size_t pos, std::size_t n) -> std::optional<int> {
    if (pos + n > ts.size()) return std::nullopt;
    int v = 0;
    for (std::size_t i = pos; i < pos + n; ++i) {
      if (!std::isdigit(static_cast<unsigned char>(ts[i]))) return std::nullopt;
      v = v * 10 + (ts[i] - '0');
    }
    return v;
  };
  auto year = digits(0, 4), month = digits(5, 2), day = digits(8, 2);
  auto hour = digits(11, 2), minute = digits(14, 2), second = digits(17, 2);
  if (!year || !month || !day || !hour || !minute || !second) return std::nullopt;
  if (ts[4] != '-' || ts[7] != '-' || ts[13] != ':' || ts[16] != ':') return std::nullopt;
  if (ts[10] != 'T' && ts[10] != 't' && ts[10] != ' ') return std::nullopt;
  if (*month < 1 || *month > 12 || *day < 1 || *day > 31 || *hour > 23 || *minute > 59 ||
      *second > 60) {
    return std::nullopt;
  }
  std::size_t pos = 19;
  std::int64_t nanos = 0;
  if (pos < ts.size() && ts[pos] == '.') {
    ++pos;
    std::size_t start = pos;
    std::int64_t scale = 100000000;
    while (pos < ts.size() && std::isdigit(static_cast<unsigned char>(ts[pos]))) {
      nanos += (ts[pos] - '0') * scale;
      scale /= 10;
      ++pos;
    }
    if (pos == start) return std::nullopt;
  }
  if (pos >= ts.size()) return std::nullopt;
  std::int64_t offset_s = 0;
  if (ts[pos] == 'Z' || ts[pos] == 'z') {
    ++pos;
  } else if (ts[pos] == '+' || ts[pos] == '-') {
    auto oh = digits(pos + 1, 2), om = digits(pos + 4, 2);
    if (!oh || !om || pos + 3 >= ts.size() || ts[pos + 3] != ':') return std::nullopt;
    offset_s = (*oh * 3600 + *om * 60) * (ts[pos] == '+' ? 1 : -1);
    pos += 6;
  } else {
    return std::nullopt;
  }
  if (pos != ts.size()) return std::nullopt;

  // Days from civil date (proleptic Gregorian).
  int y = *year - (*month <= 2 ? 1 : 0);
  int era = (y >= 0 ? y : y - 399) / 400;
  int yoe = y - era * 400;
  int mp = (*month + 9) % 12;
  int doy = (153 * mp + 2) / 5 + *day - 1;
  int doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  std::int64_t days = static_cast<std::int64_t>(era) * 146097 + doe - 719468;
  std::int64_t secs = days * 86400 + *hour * 3600 + *minute * 60 + *second - offset_s;
  return secs * 1000000000 + nanos;
}

std::vector<RawInvocation> parse_wrapper_spool(const std::filesystem::path& dir,
                                               const ParseOptions& options,
                                               std::vector<Diagnostic>* diagnostics) {
  namespace fs = std::filesystem;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) throw IoError("spool is not a directory: " + dir.string());

  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file()) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());

  struct Pending {
    std::int64_t ts;
    std::string file;
    std::size_t line;
    RawInvocation inv;
  };
  std::vector<Pending> pending;

  for (const auto& file : files) {
    std::string name = file.filename().generic_string();
    auto lines = text::split_lines(text::utf8_lossy(text::read_file(file)));
    for (std::size_t i = 0; i < lines.size(); ++i) {
      if (text::trim(lines[i]).empty()) continue;
      const std::size_t line_no = i + 1;
      auto bad = [&](const std::string& why) {
        return IngestError(IngestError::Kind::MalformedRecord,
                           file.generic_string() + ":" + std::to_string(line_no) + ": " + why);
      };
      json rec;
      try {
        rec = json::parse(lines[i]);
      } catch (const json::parse_error&) {
        throw bad("invalid JSON");
      }
      if (!rec.is_object()) throw bad("record is not an object");
      if (auto v = rec.find("v"); v != rec.end() && !(v->is_number_integer() && v->get<int>() == 1)) {
        throw bad("unsupported record version");
      }
      auto argv = rec.find("argv");
      auto cwd = rec.find("cwd");
      auto ts = rec.find("ts");
      auto tool = rec.find("tool");
      if (argv == rec.end() || !argv->is_array() || argv->empty()) throw bad("argv must be a non-empty array");
      if (cwd == rec.end() || !cwd->is_string()) throw bad("missing cwd");
      if (ts == rec.end() || !ts->is_string()) throw bad("missing ts");
      if (tool == rec.end() || !tool->is_string()) throw bad("missing tool");
      auto when = parse_rfc3339(ts->get<std::string>());
      if (!when) throw bad("ts is not RFC 3339");

      std::vector<Token> tokens;
      for (const auto& a : *argv) {
        if (!a.is_string()) throw bad("non-string argv element");
        auto s = a.get<std::string>();
        if (!s.empty()) tokens.push_back(Token{std::move(s), {}});
      }
      if (tokens.empty()) throw bad("argv elements are all empty");

      Provenance where{SourceKind::WrapperSpool, file.generic_string(), line_no};
      Dialect dialect = cmdline::detect_dialect(tokens.front().text);
      if (dialect.tool_kind == ToolKind::Unknown) dialect = cmdline::detect_dialect(tool->get<std::string>());
      std::string cwd_s = text::normalize_path("", cwd->get<std::string>());
      tokens = maybe_expand(std::move(tokens), cwd_s, dialect, options, where, diagnostics);
      auto inv = cmdline::make_invocation(std::move(tokens), cwd_s, where);
      inv.dialect = dialect;
      pending.push_back({*when, name, line_no, std::move(inv)});
    }
  }
  std::stable_sort(pending.begin(), pending.end(), [](const Pending& a, const Pending& b) {
    return std::tie(a.ts, a.file, a.line) < std::tie(b.ts, b.file, b.line);
  });
  std::vector<RawInvocation> out;
  out.reserve(pending.size());
  for (auto& p : pending) out.push_back(std::move(p.inv));
  return out;
}

std::vector<RawInvocation> parse_evidence(const EvidenceSource& source, const ParseOptions& options,
                                          std::vector<Diagnostic>* diagnostics) {
  switch (source.kind) {
    case SourceKind::RawLog: return parse_raw_log(source.path, options, diagnostics);
    case SourceKind::CompilationDb: return parse_compilation_db(source.path, options, diagnostics);
    case SourceKind::WrapperSpool: return parse_wrapper_spool(source.path, options, diagnostics);
    case SourceKind::Synthetic: break;
  }
  throw Error("no parser for synthetic evidence");
}

std::vector<FlagEntry> classify_invocation(const RawInvocation& inv, const flags::Vocabulary& vocabulary) {
  const auto& tokens = inv.tokens;
  if (inv.dialect.tool_kind != ToolKind::Archiver || inv.dialect.family != Family::GnuLike) {
    return flags::classify_arguments(tokens, inv.dialect, vocabulary);
  }
  // ar [-]<operation> [--option...] <archive> <members...>
  std::vector<FlagEntry> out;
  enum class Expect { Operation, Archive, Members } expect = Expect::Operation;
  auto verbatim = [](const Token& tok, std::string_view key) {
    FlagEntry e;
    e.key = std::string(key);
    e.spelling = tok.text;
    e.canonical = tok.text;
    e.origin = tok.origin;
    return e;
  };
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const auto& tok = tokens[i];
    if (expect == Expect::Operation) {
      out.push_back(verbatim(tok, keys::kOpaque));
      expect = Expect::Archive;
    } else if (expect == Expect::Archive) {
      if (tok.text.starts_with("--")) {
        out.push_back(verbatim(tok, keys::kOpaque));
        continue;
      }
      auto e = verbatim(tok, keys::kOutput);
      e.value = tok.text;
      out.push_back(std::move(e));
      expect = Expect::Members;
    } else {
      const Token* next = i + 1 < tokens.size() ? &tokens[i + 1] : nullptr;
      auto c = flags::classify(tok, inv.dialect, next, vocabulary);
      out.push_back(std::move(c.entry));
      if (c.consumed_next) ++i;
    }
  }
  return out;
}

namespace {

std::string relativize(const std::string& path, const std::string& root) {
  if (root.empty()) return path;
  if (path == root) return ".";
  if (path.size() > root.size() && path.starts_with(root) && path[root.size()] == '/') {
    return path.substr(root.size() + 1);
  }
  return path;
}

std::string replace_extension(std::string_view path, std::string_view ext) {
  auto name = text::basename(path);
  auto dot = name.rfind('.');
  std::string stem(dot == std::string_view::npos || dot == 0 ? name : name.substr(0, dot));
  return stem + std::string(ext);
}

struct InvocationView {
  std::vector<FlagEntry> entries;
  std::vector<const FlagEntry*> sources;
  std::optional<std::string> action;
  std::optional<std::string> output;
};

InvocationView view_of(std::vector<FlagEntry> entries) {
  InvocationView v;
  v.entries = std::move(entries);
  for (const auto& e : v.entries) {
    if (e.key == keys::kSource) v.sources.push_back(&e);
    if (e.key == keys::kAction) v.action = e.value;
    if (e.key == keys::kOutput && e.value) v.output = e.value;
  }
  return v;
}

}  // namespace

AssembleResult assemble_snapshot(const std::vector<RawInvocation>& invocations, const BuildMeta& meta,
                                 const flags::Vocabulary& vocabulary) {
  if (meta.build_id.empty()) {
    throw IngestError(IngestError::Kind::MissingBuildId, "build id must not be empty");
  }
  AssembleResult result;
  auto& snap = result.snapshot;
  snap.build_id = meta.build_id;
  snap.label = meta.label;
  snap.created = meta.created.empty() ? now_rfc3339() : meta.created;

  std::string root = meta.root.empty() ? std::string() : text::normalize_path("", meta.root);
  auto norm = [&](const RawInvocation& inv, std::string_view p) {
    return relativize(text::normalize_path(inv.cwd, p), root);
  };

  std::vector<LinkTargetRecord> targets;
  // Invocation-local TU indices for compile-and-link commands.
  std::vector<std::vector<std::size_t>> direct_members;

  for (const auto& inv : invocations) {
    auto skip = [&](std::string reason) { result.skipped.push_back({inv.source, std::move(reason)}); };
    if (inv.tokens.empty()) {
      skip("empty command");
      continue;
    }
    const bool msvc = inv.dialect.family == Family::Msvc;
    auto view = view_of(classify_invocation(inv, vocabulary));
    auto effective = flags::resolve(view.entries);

    auto make_target = [&](std::string output) {
      LinkTargetRecord t;
      t.output = std::move(output);
      for (const auto& e : effective.link_inputs) {
        const std::string& path = e.value.value_or(e.canonical);
        bool searched = e.key == keys::kLinkLib &&
                        (e.spelling.starts_with("-l") ||
                         (msvc && path.find_first_of("/\\") == std::string::npos));
        t.inputs.push_back(searched ? e.canonical : norm(inv, path));
      }
      t.invocation = inv;
      t.effective = effective;
      return t;
    };

    switch (inv.dialect.tool_kind) {
      case ToolKind::Linker:
      case ToolKind::Archiver: {
        std::optional<std::string> out = view.output;
        if (!out && inv.dialect.tool_kind == ToolKind::Linker) {
          if (!msvc) {
            out = "a.out";
          } else {
            auto first_obj = std::find_if(effective.link_inputs.begin(), effective.link_inputs.end(),
                                          [](const FlagEntry& e) { return e.key == keys::kLinkObj; });
            if (first_obj != effective.link_inputs.end()) {
              out = replace_extension(*first_obj->value, ".exe");
            }
          }
        }
        if (!out && msvc && inv.dialect.tool_kind == ToolKind::Archiver) {
          auto first_obj = std::find_if(effective.link_inputs.begin(), effective.link_inputs.end(),
                                        [](const FlagEntry& e) { return e.key == keys::kLinkObj; });
          if (first_obj != effective.link_inputs.end()) out = replace_extension(*first_obj->value, ".lib");
        }
        if (!out) {
          skip("no output could be determined");
          continue;
        }
        targets.push_back(make_target(norm(inv, *out)));
        direct_members.emplace_back();
        break;
      }
      case ToolKind::Compiler:
      case ToolKind::Unknown: {
        const std::string action = view.action.value_or("");
        if (action == "E" || action == "P") {
          skip("preprocess only");
          continue;
        }
        const bool compile_only = action == "c" || action == "S";
        if (view.sources.empty()) {
          if (!compile_only && !effective.link_inputs.empty()) {
            std::string out = view.output.value_or(msvc ? "" : "a.out");
            if (out.empty()) {
              auto first_obj = std::find_if(effective.link_inputs.begin(), effective.link_inputs.end(),
                                            [](const FlagEntry& e) { return e.key == keys::kLinkObj; });
              out = first_obj != effective.link_inputs.end() ? replace_extension(*first_obj->value, ".exe")
                                                             : "a.exe";
            } else if (msvc && (out.ends_with('/') || out.ends_with('\\'))) {
              out += "a.exe";
            }
            targets.push_back(make_target(norm(inv, out)));
            direct_members.emplace_back();
          } else {
            skip(compile_only ? "no source input" : "no source or link input");
          }
          continue;
        }

        std::vector<std::size_t> produced;
        for (const auto* src : view.sources) {
          TranslationUnitRecord tu;
          tu.source_file = norm(inv, *src->value);
          tu.invocation = inv;
          tu.effective = effective;
          if (compile_only) {
            std::string ext = action == "S" ? (msvc ? ".asm" : ".s") : (msvc ? ".obj" : ".o");
            std::string out;
            if (view.output && view.sources.size() == 1 &&
                !(msvc && (view.output->ends_with('/') || view.output->ends_with('\\')))) {
              out = *view.output;
            } else if (view.output && msvc && (view.output->ends_with('/') || view.output->ends_with('\\'))) {
              out = *view.output + replace_extension(*src->value, ext);
            } else {
              out = replace_extension(*src->value, ext);
            }
            tu.output_file = norm(inv, out);
          }
          produced.push_back(snap.tus.size());
          snap.tus.push_back(std::move(tu));
        }
        if (!compile_only) {
          std::string out;
          if (view.output) {
            out = *view.output;
          } else if (msvc) {
            out = replace_extension(*view.sources.front()->value, ".exe");
          } else {
            out = "a.out";
          }
          targets.push_back(make_target(norm(inv, out)));
          direct_members.push_back(std::move(produced));
        }
        break;
      }
    }
  }

  // TU ids: the source path, disambiguated by output when a source repeats.
  std::map<std::string, int> source_count;
  for (const auto& tu : snap.tus) ++source_count[tu.source_file];
  std::map<std::string, std::size_t> by_output;
  for (std::size_t i = 0; i < snap.tus.size(); ++i) {
    auto& tu = snap.tus[i];
    tu.id = tu.source_file;
    if (source_count[tu.source_file] > 1) {
      tu.id += " -> " + tu.output_file.value_or("(linked)#" + std::to_string(i));
    }
    if (tu.output_file) {
      auto [it, inserted] = by_output.emplace(*tu.output_file, i);
      if (!inserted) {
        throw IngestError(IngestError::Kind::DuplicateOutput,
                          "two translation units produce " + *tu.output_file + " (" +
                              snap.tus[it->second].invocation.source.describe() + ", " +
                              tu.invocation.source.describe() + ")");
      }
    }
  }
  std::set<std::string> seen_ids;
  for (const auto& tu : snap.tus) {
    if (!seen_ids.insert(tu.id).second) {
      throw IngestError(IngestError::Kind::DuplicateOutput, "ambiguous translation unit " + tu.id);
    }
  }

  std::map<std::string, std::size_t> target_by_output;
  for (std::size_t i = 0; i < targets.size(); ++i) target_by_output.emplace(targets[i].output, i);

  // Members: direct TUs of compile-and-link commands, TUs matched by object
  // path, and, transitively, the members of archives built in this snapshot.
  std::vector<std::vector<std::string>> members(targets.size());
  std::vector<int> state(targets.size(), 0);  // 0 new, 1 visiting, 2 done
  std::function<void(std::size_t)> visit = [&](std::size_t t) {
    if (state[t] != 0) return;
    state[t] = 1;
    auto& mine = members[t];
    auto add = [&](const std::string& id) {
      if (std::find(mine.begin(), mine.end(), id) == mine.end()) mine.push_back(id);
    };
    for (auto idx : direct_members[t]) add(snap.tus[idx].id);
    auto& tgt = targets[t];
    for (const auto& in : tgt.inputs) {
      if (auto it = by_output.find(in); it != by_output.end()) {
        add(snap.tus[it->second].id);
      } else if (auto jt = target_by_output.find(in); jt != target_by_output.end() && jt->second != t) {
        visit(jt->second);
        for (const auto& id : members[jt->second]) add(id);
      } else {
        tgt.external_inputs.push_back(in);
      }
    }
    state[t] = 2;
  };
  for (std::size_t t = 0; t < targets.size(); ++t) visit(t);
  for (std::size_t t = 0; t < targets.size(); ++t) targets[t].member_tus = std::move(members[t]);

  std::sort(targets.begin(), targets.end(),
            [](const LinkTargetRecord& a, const LinkTargetRecord& b) { return a.output < b.output; });
  for (std::size_t i = 1; i < targets.size(); ++i) {
    if (targets[i].output == targets[i - 1].output) {
      throw IngestError(IngestError::Kind::DuplicateOutput,
                        "two link commands produce " + targets[i].output);
    }
  }
  snap.targets = std::move(targets);
  std::sort(snap.tus.begin(), snap.tus.end(),
            [](const TranslationUnitRecord& a, const TranslationUnitRecord& b) { return a.id < b.id; });
  snap.content_hash = compute_content_hash(snap);
  return result;
}

}  // namespace flagtrace::ingest
