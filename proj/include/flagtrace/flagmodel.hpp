#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "flagtrace/cmdline.hpp"

namespace flagtrace::flags {

enum class Polarity { Positive, Negative, Valued };

// Canonical keys that carry special meaning during resolution.
namespace keys {
inline constexpr std::string_view kOptLevel = "opt_level";
inline constexpr std::string_view kExceptions = "exceptions";
inline constexpr std::string_view kStackProtector = "stack_protector";
inline constexpr std::string_view kBufferSecurity = "buffer_security";
inline constexpr std::string_view kDebugInfo = "debug_info";
inline constexpr std::string_view kLangStd = "lang_std";
inline constexpr std::string_view kMacroDefine = "macro_define";
inline constexpr std::string_view kMacroUndef = "macro_undef";
inline constexpr std::string_view kIncludeDir = "include_dir";
inline constexpr std::string_view kLinkLib = "link_lib";
inline constexpr std::string_view kLinkObj = "link_obj";
inline constexpr std::string_view kWarning = "warning";
inline constexpr std::string_view kTargetArch = "target_arch";
inline constexpr std::string_view kAction = "action";
inline constexpr std::string_view kOutput = "output";
inline constexpr std::string_view kSource = "source";
inline constexpr std::string_view kOpaque = "opaque";
}  // namespace keys

struct FlagEntry {
  std::string key;
  std::string group;  // empty when the key is not part of an exclusive group
  std::optional<std::string> value;
  Polarity polarity = Polarity::Valued;
  std::string spelling;   // original token text; separated forms joined by a space
  std::string canonical;  // dialect-normalized spelling used for comparison
  cmdline::TokenOrigin origin;

  // Value equality: spelling and origin are provenance, not state.
  friend bool operator==(const FlagEntry& a, const FlagEntry& b) {
    return a.key == b.key && a.group == b.group && a.value == b.value &&
           a.polarity == b.polarity && a.canonical == b.canonical;
  }
};

std::string_view to_string(Polarity p);

// For macro_define/macro_undef entries: the macro name (value up to '=').
std::string macro_name(const FlagEntry& entry);

enum class Arity { Flag, Joined, Separate, JoinedOrSeparate };

struct VocabularyRecord {
  std::string spelling;
  std::optional<cmdline::Family> family;  // nullopt matches both dialects
  std::string key;
  std::string group;  // may end in '*'
  Arity arity = Arity::Flag;
  Polarity polarity = Polarity::Valued;
  std::optional<std::string> value;
};

// The versioned spelling table. Records are matched exactly first, then by
// longest prefix.
class Vocabulary {
 public:
  static const Vocabulary& builtin();
  static Vocabulary parse(std::string_view document);
  static Vocabulary load(const std::filesystem::path& path);

  int version() const { return version_; }
  const std::vector<VocabularyRecord>& records() const { return records_; }

  const VocabularyRecord* match(std::string_view spelling, cmdline::Dialect dialect) const;

 private:
  int version_ = 0;
  std::vector<VocabularyRecord> records_;
};

struct Classified {
  FlagEntry entry;
  bool consumed_next = false;
};

Classified classify(const cmdline::Token& token, cmdline::Dialect dialect,
                    const cmdline::Token* next_token,
                    const Vocabulary& vocabulary = Vocabulary::builtin());

// Classifies argv[1..]; argv[0] (the program) is skipped.
std::vector<FlagEntry> classify_arguments(const std::vector<cmdline::Token>& tokens,
                                          cmdline::Dialect dialect,
                                          const Vocabulary& vocabulary = Vocabulary::builtin());

struct EffectiveFlagSet {
  std::map<std::string, FlagEntry> scalar_groups;
  std::map<std::string, FlagEntry> defines;  // macro name -> last -D or -U
  std::vector<FlagEntry> include_dirs;
  std::vector<FlagEntry> link_inputs;
  std::vector<FlagEntry> opaque;

  bool empty() const {
    return scalar_groups.empty() && defines.empty() && include_dirs.empty() &&
           link_inputs.empty() && opaque.empty();
  }
  friend bool operator==(const EffectiveFlagSet&, const EffectiveFlagSet&) = default;
};

// Folds one entry into the state. source and output entries are not part of
// the effective state and are ignored.
void apply(EffectiveFlagSet& state, const FlagEntry& entry);

EffectiveFlagSet resolve(const std::vector<FlagEntry>& entries);

// Entry list whose resolution reproduces the set.
std::vector<FlagEntry> linearize(const EffectiveFlagSet& set);

std::string canonical_serialize(const EffectiveFlagSet& set);

// Compact display form of an entry: its canonical spelling.
std::string display(const FlagEntry& entry);

}  // namespace flagtrace::flags
