#include "flagtrace/flagmodel.hpp"

#include <algorithm>
#include <set>

#include "flagtrace/text.hpp"

namespace flagtrace::flags {

// Generated from data/vocabulary.tsv at configure time.
extern const char* const kBuiltinVocabulary;

using cmdline::Dialect;
using cmdline::Family;
using cmdline::Token;
using cmdline::ToolKind;

std::string_view to_string(Polarity p) {
  switch (p) {
    case Polarity::Positive: return "positive";
    case Polarity::Negative: return "negative";
    case Polarity::Valued: break;
  }
  return "valued";
}

std::string macro_name(const FlagEntry& entry) {
  if (!entry.value) return {};
  const auto& v = *entry.value;
  return v.substr(0, v.find('='));
}

namespace {

bool boolean_key(std::string_view key) {
  return key == keys::kExceptions || key == keys::kStackProtector ||
         key == keys::kBufferSecurity || key == keys::kWarning;
}

Arity parse_arity(std::string_view s) {
  if (s == "flag") return Arity::Flag;
  if (s == "joined") return Arity::Joined;
  if (s == "separate") return Arity::Separate;
  if (s == "joined_or_separate") return Arity::JoinedOrSeparate;
  throw Error("vocabulary: unknown arity '" + std::string(s) + "'");
}

Polarity parse_polarity(std::string_view s) {
  if (s == "pos") return Polarity::Positive;
  if (s == "neg") return Polarity::Negative;
  if (s == "valued") return Polarity::Valued;
  throw Error("vocabulary: unknown polarity '" + std::string(s) + "'");
}

bool is_prefix_arity(Arity a) { return a == Arity::Joined || a == Arity::JoinedOrSeparate; }

// Linkers and archivers only understand outputs, libraries and pass-through
// options; compiler spellings such as /D or /I collide with linker options
// like /DEBUG and /INCREMENTAL.
bool applies_to_tool(const VocabularyRecord& rec, ToolKind kind) {
  if (kind != ToolKind::Linker && kind != ToolKind::Archiver) return true;
  return rec.key == keys::kOutput || rec.key == keys::kLinkLib || rec.key == keys::kOpaque;
}

}  // namespace

Vocabulary Vocabulary::parse(std::string_view document) {
  Vocabulary vocab;
  std::set<std::pair<std::string, int>> seen;
  std::size_t line_no = 0;
  for (const auto& raw : text::split_lines(document)) {
    ++line_no;
    auto line = std::string_view(raw);
    if (text::trim(line).empty() || line.front() == '#') continue;
    auto fields = text::split_fields(line);
    auto where = [&] { return "vocabulary line " + std::to_string(line_no) + ": "; };
    if (fields[0] == "version") {
      if (fields.size() != 2) throw Error(where() + "malformed version record");
      vocab.version_ = std::stoi(std::string(fields[1]));
      continue;
    }
    if (fields.size() != 7) throw Error(where() + "expected 7 fields");
    VocabularyRecord rec;
    rec.spelling = std::string(fields[0]);
    if (fields[1] == "gnu") {
      rec.family = Family::GnuLike;
    } else if (fields[1] == "msvc") {
      rec.family = Family::Msvc;
    } else if (fields[1] != "any") {
      throw Error(where() + "unknown dialect '" + std::string(fields[1]) + "'");
    }
    rec.key = std::string(fields[2]);
    if (fields[3] != "-") rec.group = std::string(fields[3]);
    rec.arity = parse_arity(fields[4]);
    rec.polarity = parse_polarity(fields[5]);
    if (fields[6] != "-") rec.value = std::string(fields[6]);
    if (rec.polarity == Polarity::Negative && !boolean_key(rec.key)) {
      throw Error(where() + "negative polarity on non-boolean key " + rec.key);
    }
    int dialect_slot = rec.family ? static_cast<int>(*rec.family) : -1;
    if (!seen.emplace(rec.spelling + (is_prefix_arity(rec.arity) ? "*" : ""), dialect_slot).second) {
      throw Error(where() + "duplicate spelling " + rec.spelling);
    }
    vocab.records_.push_back(std::move(rec));
  }
  if (vocab.version_ <= 0) throw Error("vocabulary: missing version record");
  return vocab;
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  return parse(text::read_file(path));
}

const Vocabulary& Vocabulary::builtin() {
  static const Vocabulary vocab = parse(kBuiltinVocabulary);
  return vocab;
}

const VocabularyRecord* Vocabulary::match(std::string_view spelling, Dialect dialect) const {
  const VocabularyRecord* best_prefix = nullptr;
  for (const auto& rec : records_) {
    if (rec.family && *rec.family != dialect.family) continue;
    if (!applies_to_tool(rec, dialect.tool_kind)) continue;
    if (!is_prefix_arity(rec.arity)) {
      if (rec.spelling == spelling) return &rec;
      continue;
    }
    if (!spelling.starts_with(rec.spelling)) continue;
    // A bare prefix only matches when the record can take a separate value.
    if (spelling.size() == rec.spelling.size() && rec.arity == Arity::Joined) continue;
    if (!best_prefix || rec.spelling.size() > best_prefix->spelling.size()) best_prefix = &rec;
  }
  return best_prefix;
}

namespace {

enum class InputKind { Source, Object, Library, Other };

InputKind input_kind(std::string_view path) {
  auto name = text::basename(path);
  auto dot = name.rfind('.');
  if (dot == std::string_view::npos || dot == 0) return InputKind::Other;
  auto ext = name.substr(dot + 1);
  if (ext == "C") return InputKind::Source;
  auto lower = text::to_lower(ext);
  static const std::set<std::string, std::less<>> kSource = {
      "c", "cc", "cp", "cpp", "cxx", "c++", "m", "mm", "s", "sx", "asm", "cu", "i", "ii"};
  static const std::set<std::string, std::less<>> kObject = {"o", "obj", "lo"};
  static const std::set<std::string, std::less<>> kLibrary = {"a", "so", "lib", "dylib"};
  if (kSource.contains(lower)) return InputKind::Source;
  if (kObject.contains(lower)) return InputKind::Object;
  if (kLibrary.contains(lower)) return InputKind::Library;
  // libfoo.so.1.2
  if (name.find(".so.") != std::string_view::npos) return InputKind::Library;
  return InputKind::Other;
}

FlagEntry opaque_entry(const Token& token) {
  FlagEntry e;
  e.key = std::string(keys::kOpaque);
  e.polarity = Polarity::Valued;
  e.spelling = token.text;
  e.canonical = token.text;
  e.origin = token.origin;
  return e;
}

}  // namespace

Classified classify(const Token& token, Dialect dialect, const Token* next_token,
                    const Vocabulary& vocabulary) {
  const std::string& text = token.text;
  std::string lookup = text;
  if (dialect.family == Family::Msvc && lookup.size() > 1 && lookup[0] == '-') lookup[0] = '/';

  if (const auto* rec = vocabulary.match(lookup, dialect)) {
    Classified out;
    FlagEntry& e = out.entry;
    e.key = rec->key;
    e.polarity = rec->polarity;
    e.spelling = text;
    e.origin = token.origin;
    std::string rest = lookup.substr(is_prefix_arity(rec->arity) ? rec->spelling.size() : lookup.size());
    switch (rec->arity) {
      case Arity::Flag:
        e.value = rec->value;
        e.canonical = rec->spelling;
        break;
      case Arity::Joined:
        e.value = rest;
        e.canonical = rec->spelling + rest;
        break;
      case Arity::Separate:
        e.canonical = rec->spelling;
        if (next_token) {
          e.value = next_token->text;
          e.spelling += " " + next_token->text;
          e.canonical += " " + next_token->text;
          out.consumed_next = true;
        }
        break;
      case Arity::JoinedOrSeparate:
        if (!rest.empty()) {
          e.value = rest;
        } else if (next_token) {
          e.value = next_token->text;
          e.spelling += " " + next_token->text;
          out.consumed_next = true;
        }
        e.canonical = rec->spelling + e.value.value_or("");
        break;
    }
    e.group = rec->group;
    if (!e.group.empty() && e.group.back() == '*') {
      e.group.pop_back();
      e.group += e.value.value_or("");
    }
    return out;
  }

  bool flag_like = text[0] == '-' || (dialect.family == Family::Msvc && text[0] == '/');
  if (flag_like || text.size() < 2) return {opaque_entry(token), false};

  FlagEntry e;
  e.spelling = text;
  e.canonical = text;
  e.origin = token.origin;
  e.value = text;
  switch (input_kind(text)) {
    case InputKind::Source: e.key = std::string(keys::kSource); break;
    case InputKind::Object: e.key = std::string(keys::kLinkObj); break;
    case InputKind::Library: e.key = std::string(keys::kLinkLib); break;
    case InputKind::Other: return {opaque_entry(token), false};
  }
  return {std::move(e), false};
}

std::vector<FlagEntry> classify_arguments(const std::vector<Token>& tokens, Dialect dialect,
                                          const Vocabulary& vocabulary) {
  std::vector<FlagEntry> out;
  for (std::size_t i = 1; i < tokens.size(); ++i) {
    const Token* next = i + 1 < tokens.size() ? &tokens[i + 1] : nullptr;
    auto c = classify(tokens[i], dialect, next, vocabulary);
    out.push_back(std::move(c.entry));
    if (c.consumed_next) ++i;
  }
  return out;
}

void apply(EffectiveFlagSet& state, const FlagEntry& entry) {
  const auto& key = entry.key;
  if (key == keys::kSource || key == keys::kOutput) return;
  if (!entry.group.empty()) {
    state.scalar_groups.insert_or_assign(entry.group, entry);
  } else if (key == keys::kMacroDefine || key == keys::kMacroUndef) {
    state.defines.insert_or_assign(macro_name(entry), entry);
  } else if (key == keys::kIncludeDir) {
    state.include_dirs.push_back(entry);
  } else if (key == keys::kLinkLib || key == keys::kLinkObj) {
    state.link_inputs.push_back(entry);
  } else {
    state.opaque.push_back(entry);
  }
}

EffectiveFlagSet resolve(const std::vector<FlagEntry>& entries) {
  EffectiveFlagSet state;
  for (const auto& e : entries) apply(state, e);
  return state;
}

std::vector<FlagEntry> linearize(const EffectiveFlagSet& set) {
  std::vector<FlagEntry> out;
  for (const auto& [_, e] : set.scalar_groups) out.push_back(e);
  for (const auto& [_, e] : set.defines) out.push_back(e);
  out.insert(out.end(), set.include_dirs.begin(), set.include_dirs.end());
  out.insert(out.end(), set.link_inputs.begin(), set.link_inputs.end());
  out.insert(out.end(), set.opaque.begin(), set.opaque.end());
  return out;
}

namespace {

void write_entry(std::string& out, const FlagEntry& e) {
  out += text::escape_field(e.key);
  out += '\t';
  out += text::escape_field(e.group);
  out += '\t';
  out += e.polarity == Polarity::Positive ? '+' : e.polarity == Polarity::Negative ? '-' : '=';
  out += '\t';
  out += text::escape_field(e.canonical);
  out += '\t';
  if (e.value) {
    out += '=';
    out += text::escape_field(*e.value);
  } else {
    out += '!';
  }
  out += '\n';
}

}  // namespace

std::string canonical_serialize(const EffectiveFlagSet& set) {
  std::string out = "flagtrace-effective\t1\n";
  for (const auto& [group, e] : set.scalar_groups) {
    out += "group\t" + text::escape_field(group) + "\t";
    write_entry(out, e);
  }
  for (const auto& [name, e] : set.defines) {
    out += "define\t" + text::escape_field(name) + "\t";
    write_entry(out, e);
  }
  for (const auto& e : set.include_dirs) {
    out += "include\t";
    write_entry(out, e);
  }
  for (const auto& e : set.link_inputs) {
    out += "link\t";
    write_entry(out, e);
  }
  for (const auto& e : set.opaque) {
    out += "opaque\t";
    write_entry(out, e);
  }
  return out;
}

std::string display(const FlagEntry& entry) { return entry.canonical; }

}  // namespace flagtrace::flags
