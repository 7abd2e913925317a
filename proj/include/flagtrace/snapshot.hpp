#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flagtrace/cmdline.hpp"
#include "flagtrace/flagmodel.hpp"

namespace flagtrace {

struct TranslationUnitRecord {
  // Identity within the snapshot and across builds: the normalized source
  // path, suffixed with " -> <output>" when one source is compiled twice.
  std::string id;
  std::string source_file;
  std::optional<std::string> output_file;
  cmdline::RawInvocation invocation;
  flags::EffectiveFlagSet effective;

  friend bool operator==(const TranslationUnitRecord&, const TranslationUnitRecord&) = default;
};

struct LinkTargetRecord {
  std::string output;
  std::vector<std::string> inputs;  // command order
  std::vector<std::string> member_tus;  // TU ids, including those of archives linked in
  std::vector<std::string> external_inputs;  // inputs with no TU or target evidence
  cmdline::RawInvocation invocation;
  flags::EffectiveFlagSet effective;

  friend bool operator==(const LinkTargetRecord&, const LinkTargetRecord&) = default;
};

struct BuildSnapshot {
  std::string build_id;
  std::string label;
  std::string created;  // RFC 3339, UTC
  std::vector<TranslationUnitRecord> tus;   // sorted by id
  std::vector<LinkTargetRecord> targets;    // sorted by output
  std::string content_hash;

  const TranslationUnitRecord* find_tu(std::string_view id) const;
  const LinkTargetRecord* find_target(std::string_view output) const;

  friend bool operator==(const BuildSnapshot&, const BuildSnapshot&) = default;
};

// The record section of a snapshot: the bytes the content hash covers.
// Build id, label and creation time are deliberately outside it so equal
// evidence hashes equally.
std::string canonical_records(const BuildSnapshot& snapshot);

std::string compute_content_hash(const BuildSnapshot& snapshot);

class RecordParseError : public Error {
 public:
  using Error::Error;
};

// Inverse of canonical_records. Effective sets are recomputed from the
// stored tokens and must reproduce the stored canonical lines byte for byte.
void parse_records(std::string_view records, BuildSnapshot& into,
                   const flags::Vocabulary& vocabulary = flags::Vocabulary::builtin());

// UTC now as RFC 3339 with second precision.
std::string now_rfc3339();

}  // namespace flagtrace
