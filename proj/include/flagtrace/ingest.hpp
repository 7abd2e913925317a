#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flagtrace/cmdline.hpp"
#include "flagtrace/flagmodel.hpp"
#include "flagtrace/snapshot.hpp"

namespace flagtrace::ingest {

struct EvidenceSource {
  cmdline::SourceKind kind = cmdline::SourceKind::RawLog;
  std::filesystem::path path;
};

struct BuildMeta {
  std::string build_id;
  std::string label;
  std::string created;  // empty means now
  // When set, normalized paths below root are stored relative to it so that
  // builds from different checkouts compare equal.
  std::string root;
};

class IngestError : public Error {
 public:
  enum class Kind { MalformedDb, MalformedRecord, DuplicateOutput, MissingBuildId };

  IngestError(Kind kind, std::string message) : Error(std::move(message)), kind_(kind) {}
  Kind kind() const { return kind_; }

 private:
  Kind kind_;
};

// Non-fatal observations made while parsing or assembling.
struct Diagnostic {
  cmdline::Provenance where;
  std::string message;
};

struct ParseOptions {
  std::string default_cwd;  // raw logs carry no cwd of their own
  bool expand_response_files = true;
};

std::vector<cmdline::RawInvocation> parse_raw_log_text(std::string_view content,
                                                        std::string locator,
                                                        const ParseOptions& options = {},
                                                        std::vector<Diagnostic>* diagnostics = nullptr);

std::vector<cmdline::RawInvocation> parse_raw_log(const std::filesystem::path& path,
                                                   const ParseOptions& options = {},
                                                   std::vector<Diagnostic>* diagnostics = nullptr);

std::vector<cmdline::RawInvocation> parse_compilation_db(const std::filesystem::path& path,
                                                          const ParseOptions& options = {},
                                                          std::vector<Diagnostic>* diagnostics = nullptr);

std::vector<cmdline::RawInvocation> parse_compilation_db_text(std::string_view json,
                                                               std::string locator,
                                                               const ParseOptions& options = {},
                                                               std::vector<Diagnostic>* diagnostics = nullptr);

std::vector<cmdline::RawInvocation> parse_wrapper_spool(const std::filesystem::path& dir,
                                                         const ParseOptions& options = {},
                                                         std::vector<Diagnostic>* diagnostics = nullptr);

// Dispatches on source.kind.
std::vector<cmdline::RawInvocation> parse_evidence(const EvidenceSource& source,
                                                    const ParseOptions& options = {},
                                                    std::vector<Diagnostic>* diagnostics = nullptr);

// The flag entries an invocation stands for. GNU ar's positional operation
// and archive name are recognized here since no vocabulary record can.
std::vector<flags::FlagEntry> classify_invocation(
    const cmdline::RawInvocation& invocation,
    const flags::Vocabulary& vocabulary = flags::Vocabulary::builtin());

struct SkippedInvocation {
  cmdline::Provenance where;
  std::string reason;
};

struct AssembleResult {
  BuildSnapshot snapshot;
  std::vector<SkippedInvocation> skipped;
};

AssembleResult assemble_snapshot(const std::vector<cmdline::RawInvocation>& invocations,
                                 const BuildMeta& meta,
                                 const flags::Vocabulary& vocabulary = flags::Vocabulary::builtin());

// Parses an RFC 3339 timestamp to nanoseconds since the Unix epoch.
std::optional<std::int64_t> parse_rfc3339(std::string_view ts);

}  // namespace flagtrace::ingest
