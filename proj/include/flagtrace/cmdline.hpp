#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "flagtrace/error.hpp"

namespace flagtrace::cmdline {

enum class Family { GnuLike, Msvc };
enum class ToolKind { Compiler, Linker, Archiver, Unknown };

struct Dialect {
  Family family = Family::GnuLike;
  ToolKind tool_kind = ToolKind::Unknown;

  friend bool operator==(const Dialect&, const Dialect&) = default;
};

std::string_view to_string(Family f);
std::string_view to_string(ToolKind k);
Family family_from_string(std::string_view s);
ToolKind tool_kind_from_string(std::string_view s);

// Where a token came from. A default-constructed origin means the command
// line itself; otherwise the token is the index-th token of a response file.
struct TokenOrigin {
  std::string response_file;  // empty for CommandLine
  std::size_t index = 0;

  bool from_command_line() const { return response_file.empty(); }
  friend bool operator==(const TokenOrigin&, const TokenOrigin&) = default;
};

struct Token {
  std::string text;
  TokenOrigin origin;

  friend bool operator==(const Token&, const Token&) = default;
};

enum class SourceKind { RawLog, CompilationDb, WrapperSpool, Synthetic };

std::string_view to_string(SourceKind k);
SourceKind source_kind_from_string(std::string_view s);

// Provenance of one invocation: the evidence file plus the log line number,
// compilation database entry index or spool record ordinal.
struct Provenance {
  SourceKind kind = SourceKind::Synthetic;
  std::string locator;
  std::size_t number = 0;

  std::string describe() const;
  friend bool operator==(const Provenance&, const Provenance&) = default;
};

struct RawInvocation {
  std::string program;
  std::vector<Token> tokens;  // tokens[0] is the program as written
  std::string cwd;
  Provenance source;
  Dialect dialect;

  friend bool operator==(const RawInvocation&, const RawInvocation&) = default;
};

class CmdlineError : public Error {
 public:
  enum class Kind { UnterminatedQuote, ResponseFileNotFound, ResponseFileCycle, NestingTooDeep };

  CmdlineError(Kind kind, std::string message, std::size_t position = 0)
      : Error(std::move(message)), kind_(kind), position_(position) {}

  Kind kind() const { return kind_; }
  // Byte offset into the tokenized line (UnterminatedQuote only).
  std::size_t position() const { return position_; }

 private:
  Kind kind_;
  std::size_t position_;
};

inline constexpr int kMaxResponseFileDepth = 16;

Dialect detect_dialect(std::string_view program);

std::vector<Token> tokenize(std::string_view line, Dialect dialect);

std::vector<Token> expand_response_files(const std::vector<Token>& tokens,
                                         const std::filesystem::path& cwd, Dialect dialect);

// Joins tokens with single spaces, quoting only where the dialect requires.
std::string render(const std::vector<Token>& tokens, Dialect dialect);

// Builds an invocation from already-split argv (no tokenization).
RawInvocation make_invocation(std::vector<Token> tokens, std::string cwd, Provenance source);

}  // namespace flagtrace::cmdline
