#include "flagtrace/snapshot.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>

#include "flagtrace/digest.hpp"
#include "flagtrace/ingest.hpp"
#include "flagtrace/text.hpp"

namespace flagtrace {

using text::escape_field;

const TranslationUnitRecord* BuildSnapshot::find_tu(std::string_view id) const {
  auto it = std::lower_bound(tus.begin(), tus.end(), id,
                             [](const TranslationUnitRecord& t, std::string_view v) { return t.id < v; });
  return it != tus.end() && it->id == id ? &*it : nullptr;
}

const LinkTargetRecord* BuildSnapshot::find_target(std::string_view output) const {
  auto it = std::lower_bound(targets.begin(), targets.end(), output,
                             [](const LinkTargetRecord& t, std::string_view v) { return t.output < v; });
  return it != targets.end() && it->output == output ? &*it : nullptr;
}

namespace {

constexpr std::string_view kRecordsHeader = "flagtrace-records\t1";

std::string optional_field(const std::optional<std::string>& v) {
  return v ? "=" + escape_field(*v) : "!";
}

void write_invocation(std::string& out, const cmdline::RawInvocation& inv) {
  out += "inv\t" + escape_field(inv.program) + "\t" + std::string(to_string(inv.dialect.family)) +
         "\t" + std::string(to_string(inv.dialect.tool_kind)) + "\t" + escape_field(inv.cwd) +
         "\t" + std::string(to_string(inv.source.kind)) + "\t" + escape_field(inv.source.locator) +
         "\t" + std::to_string(inv.source.number) + "\n";
  for (const auto& tok : inv.tokens) {
    out += "tok\t" + escape_field(tok.text) + "\t" + escape_field(tok.origin.response_file) +
           "\t" + std::to_string(tok.origin.index) + "\n";
  }
}

void write_effective(std::string& out, const flags::EffectiveFlagSet& set) {
  for (const auto& line : text::split_lines(flags::canonical_serialize(set))) {
    out += "eff\t" + line + "\n";
  }
}

}  // namespace

std::string canonical_records(const BuildSnapshot& snapshot) {
  std::string out = std::string(kRecordsHeader) + "\n";
  for (const auto& tu : snapshot.tus) {
    out += "tu\t" + escape_field(tu.id) + "\t" + escape_field(tu.source_file) + "\t" +
           optional_field(tu.output_file) + "\n";
    write_invocation(out, tu.invocation);
    write_effective(out, tu.effective);
  }
  for (const auto& t : snapshot.targets) {
    out += "target\t" + escape_field(t.output) + "\n";
    write_invocation(out, t.invocation);
    for (const auto& in : t.inputs) out += "in\t" + escape_field(in) + "\n";
    for (const auto& m : t.member_tus) out += "member\t" + escape_field(m) + "\n";
    for (const auto& e : t.external_inputs) out += "ext\t" + escape_field(e) + "\n";
    write_effective(out, t.effective);
  }
  return out;
}

std::string compute_content_hash(const BuildSnapshot& snapshot) {
  return sha256_hex(canonical_records(snapshot));
}

namespace {

std::size_t parse_count(std::string_view s, std::size_t line_no) {
  std::size_t v = 0;
  if (s.empty()) throw RecordParseError("record line " + std::to_string(line_no) + ": empty number");
  for (char c : s) {
    if (c < '0' || c > '9') {
      throw RecordParseError("record line " + std::to_string(line_no) + ": bad number");
    }
    v = v * 10 + static_cast<std::size_t>(c - '0');
  }
  return v;
}

struct PendingRecord {
  enum class Kind { None, Tu, Target } kind = Kind::None;
  TranslationUnitRecord tu;
  LinkTargetRecord target;
  std::string eff_text;
};

}  // namespace

void parse_records(std::string_view records, BuildSnapshot& into,
                   const flags::Vocabulary& vocabulary) {
  auto lines = text::split_lines(records);
  if (lines.empty() || lines[0] != kRecordsHeader) {
    throw RecordParseError("missing records header");
  }
  PendingRecord pending;
  std::size_t line_no = 1;

  auto finish = [&] {
    if (pending.kind == PendingRecord::Kind::None) return;
    auto& inv = pending.kind == PendingRecord::Kind::Tu ? pending.tu.invocation
                                                         : pending.target.invocation;
    auto effective = flags::resolve(ingest::classify_invocation(inv, vocabulary));
    if (flags::canonical_serialize(effective) != pending.eff_text) {
      throw RecordParseError("stored effective flag set does not match its invocation (record ending line " +
                             std::to_string(line_no) + ")");
    }
    if (pending.kind == PendingRecord::Kind::Tu) {
      pending.tu.effective = std::move(effective);
      into.tus.push_back(std::move(pending.tu));
    } else {
      pending.target.effective = std::move(effective);
      into.targets.push_back(std::move(pending.target));
    }
    pending = PendingRecord{};
  };

  auto current_invocation = [&]() -> cmdline::RawInvocation& {
    if (pending.kind == PendingRecord::Kind::Tu) return pending.tu.invocation;
    if (pending.kind == PendingRecord::Kind::Target) return pending.target.invocation;
    throw RecordParseError("record line " + std::to_string(line_no) + ": outside a record");
  };
  auto require_target = [&]() -> LinkTargetRecord& {
    if (pending.kind != PendingRecord::Kind::Target) {
      throw RecordParseError("record line " + std::to_string(line_no) + ": expected within target");
    }
    return pending.target;
  };

  for (std::size_t i = 1; i < lines.size(); ++i) {
    line_no = i + 1;
    std::string_view line = lines[i];
    auto f = text::split_fields(line);
    auto need = [&](std::size_t n) {
      if (f.size() != n) {
        throw RecordParseError("record line " + std::to_string(line_no) + ": expected " +
                               std::to_string(n) + " fields");
      }
    };
    const auto tag = f[0];
    if (tag == "tu") {
      need(4);
      finish();
      pending.kind = PendingRecord::Kind::Tu;
      pending.tu.id = text::unescape_field(f[1]);
      pending.tu.source_file = text::unescape_field(f[2]);
      if (f[3] != "!") {
        if (f[3].empty() || f[3][0] != '=') throw RecordParseError("bad output field");
        pending.tu.output_file = text::unescape_field(f[3].substr(1));
      }
    } else if (tag == "target") {
      need(2);
      finish();
      pending.kind = PendingRecord::Kind::Target;
      pending.target.output = text::unescape_field(f[1]);
    } else if (tag == "inv") {
      need(8);
      auto& inv = current_invocation();
      try {
        inv.program = text::unescape_field(f[1]);
        inv.dialect.family = cmdline::family_from_string(f[2]);
        inv.dialect.tool_kind = cmdline::tool_kind_from_string(f[3]);
        inv.cwd = text::unescape_field(f[4]);
        inv.source.kind = cmdline::source_kind_from_string(f[5]);
      } catch (const RecordParseError&) {
        throw;
      } catch (const Error& e) {
        throw RecordParseError("record line " + std::to_string(line_no) + ": " + e.what());
      }
      inv.source.locator = text::unescape_field(f[6]);
      inv.source.number = parse_count(f[7], line_no);
    } else if (tag == "tok") {
      need(4);
      cmdline::Token tok;
      tok.text = text::unescape_field(f[1]);
      tok.origin.response_file = text::unescape_field(f[2]);
      tok.origin.index = parse_count(f[3], line_no);
      if (tok.text.empty()) throw RecordParseError("record line " + std::to_string(line_no) + ": empty token");
      current_invocation().tokens.push_back(std::move(tok));
    } else if (tag == "in") {
      need(2);
      require_target().inputs.push_back(text::unescape_field(f[1]));
    } else if (tag == "member") {
      need(2);
      require_target().member_tus.push_back(text::unescape_field(f[1]));
    } else if (tag == "ext") {
      need(2);
      require_target().external_inputs.push_back(text::unescape_field(f[1]));
    } else if (tag == "eff") {
      current_invocation();
      pending.eff_text += std::string(line.substr(4)) + "\n";
    } else {
      throw RecordParseError("record line " + std::to_string(line_no) + ": unknown tag '" +
                             std::string(tag) + "'");
    }
  }
  finish();
}

std::string now_rfc3339() {
  auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace flagtrace
