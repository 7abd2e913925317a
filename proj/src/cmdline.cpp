#include "flagtrace/cmdline.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <system_error>

#include "flagtrace/text.hpp"

namespace flagtrace::cmdline {

std::string_view to_string(Family f) {
  return f == Family::Msvc ? "msvc" : "gnu";
}

std::string_view to_string(ToolKind k) {
  switch (k) {
    case ToolKind::Compiler: return "compiler";
    case ToolKind::Linker: return "linker";
    case ToolKind::Archiver: return "archiver";
    case ToolKind::Unknown: break;
  }
  return "unknown";
}

Family family_from_string(std::string_view s) {
  if (s == "msvc") return Family::Msvc;
  if (s == "gnu") return Family::GnuLike;
  throw Error("unknown dialect family '" + std::string(s) + "'");
}

ToolKind tool_kind_from_string(std::string_view s) {
  if (s == "compiler") return ToolKind::Compiler;
  if (s == "linker") return ToolKind::Linker;
  if (s == "archiver") return ToolKind::Archiver;
  if (s == "unknown") return ToolKind::Unknown;
  throw Error("unknown tool kind '" + std::string(s) + "'");
}

std::string_view to_string(SourceKind k) {
  switch (k) {
    case SourceKind::RawLog: return "log";
    case SourceKind::CompilationDb: return "db";
    case SourceKind::WrapperSpool: return "spool";
    case SourceKind::Synthetic: break;
  }
  return "synthetic";
}

SourceKind source_kind_from_string(std::string_view s) {
  if (s == "log") return SourceKind::RawLog;
  if (s == "db") return SourceKind::CompilationDb;
  if (s == "spool") return SourceKind::WrapperSpool;
  if (s == "synthetic") return SourceKind::Synthetic;
  throw Error("unknown provenance kind '" + std::string(s) + "'");
}

std::string Provenance::describe() const {
  std::string where = locator.empty() ? std::string(to_string(kind)) : locator;
  switch (kind) {
    case SourceKind::RawLog: return where + ":" + std::to_string(number);
    case SourceKind::CompilationDb: return where + "[" + std::to_string(number) + "]";
    case SourceKind::WrapperSpool: return where + "#" + std::to_string(number);
    case SourceKind::Synthetic: break;
  }
  return where + "@" + std::to_string(number);
}

namespace {

struct ToolEntry {
  std::string_view name;
  Family family;
  ToolKind kind;
};

constexpr std::array kTools = {
    ToolEntry{"cc", Family::GnuLike, ToolKind::Compiler},
    ToolEntry{"gcc", Family::GnuLike, ToolKind::Compiler},
    ToolEntry{"g++", Family::GnuLike, ToolKind::Compiler},
    ToolEntry{"c++", Family::GnuLike, ToolKind::Compiler},
    ToolEntry{"clang", Family::GnuLike, ToolKind::Compiler},
    ToolEntry{"clang++", Family::GnuLike, ToolKind::Compiler},
    ToolEntry{"ld", Family::GnuLike, ToolKind::Linker},
    ToolEntry{"ar", Family::GnuLike, ToolKind::Archiver},
    ToolEntry{"cl", Family::Msvc, ToolKind::Compiler},
    ToolEntry{"link", Family::Msvc, ToolKind::Linker},
    ToolEntry{"lib", Family::Msvc, ToolKind::Archiver},
};

bool all_digits(std::string_view s) {
  return !s.empty() && std::all_of(s.begin(), s.end(),
                                   [](unsigned char c) { return std::isdigit(c); });
}

// "gcc-12" and "clang++-15.0" name the same tools as "gcc" and "clang++".
std::string_view strip_version_suffix(std::string_view name) {
  auto dash = name.rfind('-');
  if (dash == std::string_view::npos || dash == 0) return name;
  auto tail = name.substr(dash + 1);
  bool versionish = !tail.empty();
  for (std::size_t i = 0; i < tail.size(); ++i) {
    char c = tail[i];
    if (c == '.') {
      if (i == 0 || i + 1 == tail.size() || tail[i - 1] == '.') versionish = false;
    } else if (!std::isdigit(static_cast<unsigned char>(c))) {
      versionish = false;
    }
  }
  return versionish ? name.substr(0, dash) : name;
}

}  // namespace

Dialect detect_dialect(std::string_view program) {
  std::string name = text::to_lower(text::basename(program));
  auto dot = name.rfind('.');
  if (dot != std::string::npos && dot > 0 && !all_digits(std::string_view(name).substr(dot + 1))) {
    name.resize(dot);
  }
  std::string_view stem = strip_version_suffix(name);
  for (const auto& tool : kTools) {
    if (tool.name == stem) return Dialect{tool.family, tool.kind};
  }
  return Dialect{Family::GnuLike, ToolKind::Unknown};
}

namespace {

bool is_space(char c) {
  return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\v' || c == '\f';
}

std::vector<Token> tokenize_posix(std::string_view line) {
  std::vector<Token> out;
  std::string word;
  bool in_word = false;
  auto flush = [&] {
    if (in_word && !word.empty()) out.push_back(Token{std::move(word), {}});
    word.clear();
    in_word = false;
  };
  const std::size_t n = line.size();
  for (std::size_t i = 0; i < n; ++i) {
    char c = line[i];
    if (is_space(c)) {
      flush();
    } else if (c == '\'') {
      in_word = true;
      auto close = line.find('\'', i + 1);
      if (close == std::string_view::npos) {
        throw CmdlineError(CmdlineError::Kind::UnterminatedQuote,
                           "unterminated single quote at offset " + std::to_string(i), i);
      }
      word.append(line.substr(i + 1, close - i - 1));
      i = close;
    } else if (c == '"') {
      in_word = true;
      std::size_t open = i;
      bool closed = false;
      for (++i; i < n; ++i) {
        char d = line[i];
        if (d == '"') {
          closed = true;
          break;
        }
        if (d == '\\' && i + 1 < n) {
          char e = line[i + 1];
          if (e == '$' || e == '`' || e == '"' || e == '\\') {
            word += e;
            ++i;
            continue;
          }
          if (e == '\n') {
            ++i;
            continue;
          }
        }
        word += d;
      }
      if (!closed) {
        throw CmdlineError(CmdlineError::Kind::UnterminatedQuote,
                           "unterminated double quote at offset " + std::to_string(open), open);
      }
    } else if (c == '\\') {
      in_word = true;
      if (i + 1 < n) {
        char e = line[++i];
        if (e == '\n') continue;
        word += e;
      } else {
        word += c;
      }
    } else {
      in_word = true;
      word += c;
    }
  }
  flush();
  return out;
}

// Microsoft C runtime argv rules: 2n backslashes before a quote yield n
// backslashes and a quote toggle, 2n+1 yield n backslashes and a literal
// quote, and "" inside a quoted region is a literal quote.
std::vector<Token> tokenize_msvc(std::string_view line) {
  std::vector<Token> out;
  const std::size_t n = line.size();
  std::size_t i = 0;
  while (true) {
    while (i < n && is_space(line[i])) ++i;
    if (i >= n) break;
    std::string word;
    bool in_quotes = false;
    std::size_t quote_start = 0;
    while (i < n) {
      char c = line[i];
      if (c == '\\') {
        std::size_t count = 0;
        while (i < n && line[i] == '\\') {
          ++count;
          ++i;
        }
        if (i < n && line[i] == '"') {
          word.append(count / 2, '\\');
          if (count % 2 == 1) {
            word += '"';
            ++i;
          }
        } else {
          word.append(count, '\\');
        }
        continue;
      }
      if (c == '"') {
        if (in_quotes && i + 1 < n && line[i + 1] == '"') {
          word += '"';
          i += 2;
          continue;
        }
        in_quotes = !in_quotes;
        if (in_quotes) quote_start = i;
        ++i;
        continue;
      }
      if (!in_quotes && is_space(c)) break;
      word += c;
      ++i;
    }
    if (in_quotes) {
      throw CmdlineError(CmdlineError::Kind::UnterminatedQuote,
                         "unterminated double quote at offset " + std::to_string(quote_start),
                         quote_start);
    }
    if (!word.empty()) out.push_back(Token{std::move(word), {}});
  }
  return out;
}

void expand_into(const std::vector<Token>& tokens, const std::filesystem::path& cwd,
                 Dialect dialect, std::vector<std::string>& chain, std::vector<Token>& out) {
  for (const auto& tok : tokens) {
    if (tok.text.size() < 2 || tok.text[0] != '@') {
      out.push_back(tok);
      continue;
    }
    if (static_cast<int>(chain.size()) >= kMaxResponseFileDepth) {
      throw CmdlineError(CmdlineError::Kind::NestingTooDeep,
                         "response files nested deeper than " +
                             std::to_string(kMaxResponseFileDepth));
    }
    std::string path = text::normalize_path(cwd.generic_string(), tok.text.substr(1));
    std::error_code ec;
    auto canonical = std::filesystem::weakly_canonical(path, ec).generic_string();
    if (ec) canonical = path;
    if (std::find(chain.begin(), chain.end(), canonical) != chain.end()) {
      std::string msg = "response file cycle: ";
      for (const auto& p : chain) msg += p + " -> ";
      msg += canonical;
      throw CmdlineError(CmdlineError::Kind::ResponseFileCycle, msg);
    }
    if (!std::filesystem::is_regular_file(path, ec)) {
      throw CmdlineError(CmdlineError::Kind::ResponseFileNotFound,
                         "response file not found: " + path);
    }
    std::string body = text::utf8_lossy(text::read_file(path));
    if (body.starts_with("\xEF\xBB\xBF")) body.erase(0, 3);
    auto inner = tokenize(body, dialect);
    for (std::size_t k = 0; k < inner.size(); ++k) inner[k].origin = TokenOrigin{path, k};
    chain.push_back(canonical);
    expand_into(inner, cwd, dialect, chain, out);
    chain.pop_back();
  }
}

bool needs_posix_quoting(std::string_view s) {
  return s.find_first_of(" \t\n\r\v\f'\"\\") != std::string_view::npos;
}

std::string quote_msvc(std::string_view s) {
  if (s.find_first_of(" \t\n\r\v\f\"") == std::string_view::npos) return std::string(s);
  std::string out = "\"";
  std::size_t backslashes = 0;
  for (char c : s) {
    if (c == '\\') {
      ++backslashes;
      continue;
    }
    if (c == '"') {
      out.append(backslashes * 2 + 1, '\\');
      out += '"';
    } else {
      out.append(backslashes, '\\');
      out += c;
    }
    backslashes = 0;
  }
  out.append(backslashes * 2, '\\');
  out += '"';
  return out;
}

}  // namespace

std::vector<Token> tokenize(std::string_view line, Dialect dialect) {
  return dialect.family == Family::Msvc ? tokenize_msvc(line) : tokenize_posix(line);
}

std::vector<Token> expand_response_files(const std::vector<Token>& tokens,
                                         const std::filesystem::path& cwd, Dialect dialect) {
  std::vector<Token> out;
  out.reserve(tokens.size());
  std::vector<std::string> chain;
  expand_into(tokens, cwd, dialect, chain, out);
  return out;
}

std::string render(const std::vector<Token>& tokens, Dialect dialect) {
  std::string out;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    if (i) out += ' ';
    const auto& t = tokens[i].text;
    if (dialect.family == Family::Msvc) {
      out += quote_msvc(t);
    } else if (!needs_posix_quoting(t)) {
      out += t;
    } else {
      out += '\'';
      for (char c : t) {
        if (c == '\'') {
          out += "'\\''";
        } else {
          out += c;
        }
      }
      out += '\'';
    }
  }
  return out;
}

RawInvocation make_invocation(std::vector<Token> tokens, std::string cwd, Provenance source) {
  RawInvocation inv;
  if (!tokens.empty()) inv.program = tokens.front().text;
  inv.dialect = inv.program.empty() ? Dialect{} : detect_dialect(inv.program);
  inv.tokens = std::move(tokens);
  inv.cwd = std::move(cwd);
  inv.source = std::move(source);
  return inv;
}

}  // namespace flagtrace::cmdline
