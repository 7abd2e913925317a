#include "flagtrace/cli.hpp"

#include <algorithm>
#include <filesystem>
#include <iostream>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "flagtrace/audit.hpp"
#include "flagtrace/diffengine.hpp"
#include "flagtrace/elfnote.hpp"
#include "flagtrace/ingest.hpp"
#include "flagtrace/mklint.hpp"
#include "flagtrace/store.hpp"

namespace flagtrace::cli {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct UsageError : Error {
  using Error::Error;
};

struct Globals {
  std::string store;
  std::string format = "text";
  std::string config;
  std::string vocabulary;
};

struct Context {
  const Globals& g;
  std::ostream& out;
  std::ostream& err;
  std::optional<flags::Vocabulary> custom_vocab;

  Format format() const { return g.format == "json" ? Format::Json : Format::Text; }

  const flags::Vocabulary& vocab() {
    if (g.vocabulary.empty()) return flags::Vocabulary::builtin();
    if (!custom_vocab) custom_vocab = flags::Vocabulary::load(g.vocabulary);
    return *custom_vocab;
  }

  store::Store open_store() {
    if (g.store.empty()) throw UsageError("no store given; pass --store or set FLAGTRACE_STORE");
    return store::Store(g.store, vocab());
  }

  void emit_json(const json& j) { out << j.dump(2) << "\n"; }
};

json entry_json(const flags::FlagEntry& e) {
  json j = {{"key", e.key},
            {"group", e.group},
            {"polarity", flags::to_string(e.polarity)},
            {"canonical", e.canonical},
            {"spelling", e.spelling}};
  j["value"] = e.value ? json(*e.value) : json(nullptr);
  if (!e.origin.from_command_line()) {
    j["origin"] = {{"response_file", e.origin.response_file}, {"index", e.origin.index}};
  }
  return j;
}

// ---- ingest

struct IngestArgs {
  std::vector<std::string> logs, dbs, spools;
  std::string label, build_id, created, root, cwd;
};

int do_ingest(Context& c, const IngestArgs& a) {
  if (a.logs.empty() && a.dbs.empty() && a.spools.empty()) {
    throw UsageError("ingest needs at least one --log, --db or --spool");
  }
  ingest::ParseOptions opts;
  opts.default_cwd = a.cwd.empty() ? fs::current_path().generic_string() : a.cwd;
  std::vector<ingest::Diagnostic> diags;
  std::vector<cmdline::RawInvocation> invocations;
  auto add = [&](cmdline::SourceKind kind, const std::vector<std::string>& paths) {
    for (const auto& p : paths) {
      auto got = ingest::parse_evidence({kind, p}, opts, &diags);
      invocations.insert(invocations.end(), std::make_move_iterator(got.begin()),
                         std::make_move_iterator(got.end()));
    }
  };
  add(cmdline::SourceKind::RawLog, a.logs);
  add(cmdline::SourceKind::CompilationDb, a.dbs);
  add(cmdline::SourceKind::WrapperSpool, a.spools);

  if (invocations.empty()) c.err << "warning: no compiler, linker or archiver invocations found\n";
  ingest::BuildMeta meta{a.build_id, a.label, a.created, a.root};
  auto result = ingest::assemble_snapshot(invocations, meta, c.vocab());
  auto st = c.open_store();
  auto hash = st.put(result.snapshot);

  for (const auto& d : diags) c.err << "note: " << d.where.describe() << ": " << d.message << "\n";
  for (const auto& s : result.skipped) c.err << "skipped: " << s.where.describe() << ": " << s.reason << "\n";
  if (c.format() == Format::Json) {
    json j = {{"report_version", kReportVersion},
              {"kind", "ingest"},
              {"build_id", result.snapshot.build_id},
              {"label", result.snapshot.label},
              {"content_hash", hash},
              {"invocations", invocations.size()},
              {"tus", result.snapshot.tus.size()},
              {"targets", result.snapshot.targets.size()},
              {"skipped", result.skipped.size()}};
    c.emit_json(j);
  } else {
    c.out << "ingested " << result.snapshot.build_id << " (" << result.snapshot.label << "): "
          << result.snapshot.tus.size() << " translation units, " << result.snapshot.targets.size()
          << " targets, " << result.skipped.size() << " skipped\n"
          << "content hash " << hash << "\n";
  }
  return kOk;
}

// ---- diff

int do_diff(Context& c, const std::string& a, const std::string& b) {
  auto st = c.open_store();
  auto report = diff::diff(st.get(a), st.get(b));
  c.out << diff::render_report(report, c.format());
  return report.empty() ? kOk : kWarnings;
}

// ---- history

struct HistoryArgs {
  std::string label, group, define, subject;
};

int do_history(Context& c, const HistoryArgs& a) {
  if (!a.group.empty() && !a.define.empty()) throw UsageError("--group and --define are exclusive");
  if (!a.subject.empty() && a.group.empty() && a.define.empty()) {
    throw UsageError("--subject needs --group or --define");
  }
  std::optional<store::FlagQuery> q;
  if (!a.group.empty()) q = store::FlagQuery{a.group, std::nullopt};
  if (!a.define.empty()) q = store::FlagQuery{"define:" + a.define, std::nullopt};
  if (q && !a.subject.empty()) q->subject = a.subject;
  auto st = c.open_store();
  auto entries = st.history(a.label, q);
  if (c.format() == Format::Json) {
    json j = {{"report_version", kReportVersion}, {"kind", "history"}, {"label", a.label}};
    j["query"] = q ? json(q->key) : json(nullptr);
    j["builds"] = json::array();
    for (const auto& h : entries) {
      j["builds"].push_back({{"build_id", h.build_id},
                             {"created", h.created},
                             {"content_hash", h.content_hash},
                             {"tus", h.tu_count},
                             {"targets", h.target_count},
                             {"values", h.values},
                             {"changed", h.changed}});
    }
    c.emit_json(j);
    return kOk;
  }
  if (entries.empty()) {
    c.out << "no builds labelled " << a.label << "\n";
    return kOk;
  }
  for (const auto& h : entries) {
    c.out << (h.changed ? "* " : "  ") << h.build_id << "  " << h.created << "  " << h.content_hash.substr(0, 12)
          << "  " << h.tu_count << " TUs, " << h.target_count << " targets\n";
    for (const auto& [subject, value] : h.values) c.out << "      " << subject << ": " << value << "\n";
  }
  return kOk;
}

// ---- audit

int do_audit(Context& c, const std::string& id, const std::string& previous) {
  auto config = c.g.config.empty() ? audit::AuditConfig::defaults() : audit::AuditConfig::load(c.g.config);
  auto st = c.open_store();
  auto snap = st.get(id);
  std::optional<BuildSnapshot> prev;
  if (!previous.empty()) prev = st.get(previous);
  auto result = audit::run_audit(snap, prev ? &*prev : nullptr, config);
  c.out << audit::render_findings(result.findings, result.inconclusive, "audit", c.format());
  return audit::exit_code(result.findings);
}

// ---- lint

int do_lint(Context& c, const std::vector<std::string>& files, const std::vector<std::string>& extra,
            std::size_t threshold) {
  mklint::ScanResult merged;
  for (const auto& f : files) merged.merge(mklint::scan_makefile(f));
  auto vocab = mklint::builtin_vocabulary();
  vocab.insert(extra.begin(), extra.end());
  auto findings = mklint::lint(merged.assignments, merged.expansions, vocab, threshold);
  if (c.format() == Format::Text) {
    for (const auto& d : merged.diagnostics) {
      c.err << d.file << ":" << d.line << ": note: " << d.message << "\n";
    }
  }
  c.out << mklint::render_findings(findings, merged.diagnostics, c.format());
  return findings.empty() ? kOk : kWarnings;
}

// ---- stamp / read-stamp

const flags::EffectiveFlagSet& subject_set(const BuildSnapshot& s, const std::string& subject) {
  if (const auto* tu = s.find_tu(subject)) return tu->effective;
  if (const auto* t = s.find_target(subject)) return t->effective;
  throw UsageError("build " + s.build_id + " has no translation unit or target '" + subject + "'");
}

int do_stamp(Context& c, const std::string& elf_path, const std::string& build, const std::string& subject) {
  auto st = c.open_store();
  auto snap = st.get(build);
  auto payload = elf::make_payload(build, subject, subject_set(snap, subject));
  elf::stamp(elf_path, payload);
  if (c.format() == Format::Json) {
    c.emit_json({{"report_version", kReportVersion},
                  {"kind", "stamp"},
                  {"file", elf_path},
                  {"build_id", build},
                  {"subject", subject},
                  {"effective_digest", payload.effective_digest},
                  {"flags_elided", !payload.flags_text.has_value()}});
  } else {
    c.out << "stamped " << elf_path << " with " << subject << " from " << build << "\n";
    if (!payload.flags_text) c.out << "flags text elided (payload over 64 KiB); digest kept\n";
  }
  return kOk;
}

int do_read_stamp(Context& c, const std::string& elf_path) {
  auto payload = elf::read_stamp(elf_path);
  auto comments = elf::read_comment(elf_path);
  if (c.format() == Format::Json) {
    json j = {{"report_version", kReportVersion}, {"kind", "read-stamp"}, {"file", elf_path}};
    if (payload) {
      j["stamp"] = {{"version", payload->version},
                    {"build_id", payload->build_id},
                    {"subject", payload->subject},
                    {"effective_digest", payload->effective_digest}};
      j["stamp"]["flags_text"] = payload->flags_text ? json(*payload->flags_text) : json(nullptr);
    } else {
      j["stamp"] = nullptr;
    }
    j["comment"] = comments;
    c.emit_json(j);
    return kOk;
  }
  if (!payload) {
    c.out << "no flagtrace stamp\n";
  } else {
    c.out << "build: " << payload->build_id << "\nsubject: " << payload->subject
          << "\ndigest: " << payload->effective_digest << "\n";
    if (payload->flags_text) c.out << "flags:\n" << *payload->flags_text;
  }
  for (const auto& s : comments) c.out << "comment: " << s << "\n";
  return kOk;
}

// ---- query

int do_query_builds(Context& c, const std::string& label) {
  auto st = c.open_store();
  std::vector<store::IndexEntry> rows;
  for (auto& e : st.index()) {
    if (label.empty() || e.label == label) rows.push_back(std::move(e));
  }
  if (c.format() == Format::Json) {
    json j = {{"report_version", kReportVersion}, {"kind", "builds"}, {"builds", json::array()}};
    for (const auto& e : rows) {
      j["builds"].push_back(
          {{"build_id", e.build_id}, {"label", e.label}, {"created", e.created}, {"content_hash", e.content_hash}});
    }
    c.emit_json(j);
    return kOk;
  }
  for (const auto& e : rows) c.out << e.build_id << "\t" << e.label << "\t" << e.created << "\t" << e.content_hash << "\n";
  return kOk;
}

int do_query_show(Context& c, const std::string& build, const std::string& subject) {
  auto st = c.open_store();
  auto snap = st.get(build);
  const auto& set = subject_set(snap, subject);
  auto entries = flags::linearize(set);
  if (c.format() == Format::Json) {
    json j = {{"report_version", kReportVersion},
              {"kind", "show"},
              {"build_id", build},
              {"subject", subject},
              {"entries", json::array()}};
    for (const auto& e : entries) j["entries"].push_back(entry_json(e));
    c.emit_json(j);
    return kOk;
  }
  c.out << subject << " in " << build << ":\n";
  for (const auto& e : entries) {
    c.out << "  " << (e.group.empty() ? e.key : e.group) << ": " << flags::display(e);
    if (e.spelling != e.canonical) c.out << "  (as " << e.spelling << ")";
    c.out << "\n";
  }
  return kOk;
}

int do_query_find(Context& c, const std::string& build, const std::string& group, const std::string& value) {
  auto st = c.open_store();
  auto snap = st.get(build);
  std::vector<std::string> hits;
  for (const auto& tu : snap.tus) {
    if (store::query_value(tu.effective, group) == value) hits.push_back(tu.id);
  }
  if (c.format() == Format::Json) {
    c.emit_json({{"report_version", kReportVersion},
                 {"kind", "find"},
                 {"build_id", build},
                 {"group", group},
                 {"value", value},
                 {"tus", hits}});
    return kOk;
  }
  for (const auto& h : hits) c.out << h << "\n";
  if (hits.empty()) c.out << "no translation units\n";
  return kOk;
}

// Errors always go to the diagnostic stream; JSON consumers also get an
// error document on the data stream.
int fail(Context& c, int code, const std::string& message) {
  c.err << "flagtrace: " << message << "\n";
  if (c.format() == Format::Json) {
    c.emit_json({{"report_version", kReportVersion}, {"kind", "error"}, {"exit_code", code}, {"message", message}});
  }
  return code;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Trace, compare and audit compiler flags across builds", "flagtrace"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--store", g.store, "Snapshot store directory")->envname("FLAGTRACE_STORE");
  app.add_option("--format", g.format, "Output format")->check(CLI::IsMember({"text", "json"}));
  app.add_option("--config", g.config, "Audit configuration file");
  app.add_option("--vocabulary", g.vocabulary, "Flag vocabulary table replacing the builtin one");

  IngestArgs ia;
  auto* ingest_cmd = app.add_subcommand("ingest", "Record a build snapshot from logs, databases or spools");
  ingest_cmd->add_option("--log", ia.logs, "Raw build log");
  ingest_cmd->add_option("--db", ia.dbs, "compile_commands.json");
  ingest_cmd->add_option("--spool", ia.spools, "Wrapper spool directory");
  ingest_cmd->add_option("--label", ia.label, "Build configuration label")->required();
  ingest_cmd->add_option("--build-id", ia.build_id, "Unique build id")->required();
  ingest_cmd->add_option("--created", ia.created, "Creation time, RFC 3339 (default now)");
  ingest_cmd->add_option("--root", ia.root, "Source root; paths below it are stored relative");
  ingest_cmd->add_option("--cwd", ia.cwd, "Working directory assumed for raw logs");

  std::string diff_a, diff_b;
  auto* diff_cmd = app.add_subcommand("diff", "Compare the effective flags of two builds");
  diff_cmd->add_option("before", diff_a)->required();
  diff_cmd->add_option("after", diff_b)->required();

  HistoryArgs ha;
  auto* history_cmd = app.add_subcommand("history", "Timeline of builds with one label");
  history_cmd->add_option("label", ha.label)->required();
  history_cmd->add_option("--group", ha.group, "Exclusive group to track, e.g. opt_level");
  history_cmd->add_option("--define", ha.define, "Macro to track");
  history_cmd->add_option("--subject", ha.subject, "Restrict to one TU or target");

  std::string audit_id, audit_prev;
  auto* audit_cmd = app.add_subcommand("audit", "Check a build for flag anomalies");
  audit_cmd->add_option("build", audit_id)->required();
  audit_cmd->add_option("--previous", audit_prev, "Earlier build for link-order comparison");

  std::vector<std::string> lint_files, lint_vocab;
  std::size_t lint_threshold = mklint::kDefaultThreshold;
  auto* lint_cmd = app.add_subcommand("lint", "Find near-miss flag variable names in makefiles");
  lint_cmd->add_option("files", lint_files)->required();
  lint_cmd->add_option("--vocab", lint_vocab, "Extra known variable name");
  lint_cmd->add_option("--threshold", lint_threshold, "Maximum edit distance")->check(CLI::Range(1, 16));

  std::string stamp_file, stamp_build, stamp_subject;
  auto* stamp_cmd = app.add_subcommand("stamp", "Embed a TU's or target's flags in an ELF file");
  stamp_cmd->add_option("elf", stamp_file)->required();
  stamp_cmd->add_option("--build-id", stamp_build)->required();
  stamp_cmd->add_option("--subject", stamp_subject)->required();

  std::string read_file_arg;
  auto* read_cmd = app.add_subcommand("read-stamp", "Show the flag stamp and .comment of an ELF file");
  read_cmd->add_option("elf", read_file_arg)->required();

  auto* query_cmd = app.add_subcommand("query", "Fixed queries over the store");
  query_cmd->require_subcommand(1);
  std::string q_label;
  auto* q_builds = query_cmd->add_subcommand("builds", "List builds");
  q_builds->add_option("--label", q_label);
  std::string q_build, q_subject;
  auto* q_show = query_cmd->add_subcommand("show", "Effective flags of one TU or target");
  q_show->add_option("build", q_build)->required();
  q_show->add_option("subject", q_subject)->required();
  std::string f_build, f_group, f_value;
  auto* q_find = query_cmd->add_subcommand("find", "TUs whose group resolves to a value");
  q_find->add_option("build", f_build)->required();
  q_find->add_option("--group", f_group, "Group id or define:NAME")->required();
  q_find->add_option("--value", f_value, "Winning spelling or Absent")->required();

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  Context c{g, out, err, std::nullopt};
  try {
    if (*ingest_cmd) return do_ingest(c, ia);
    if (*diff_cmd) return do_diff(c, diff_a, diff_b);
    if (*history_cmd) return do_history(c, ha);
    if (*audit_cmd) return do_audit(c, audit_id, audit_prev);
    if (*lint_cmd) return do_lint(c, lint_files, lint_vocab, lint_threshold);
    if (*stamp_cmd) return do_stamp(c, stamp_file, stamp_build, stamp_subject);
    if (*read_cmd) return do_read_stamp(c, read_file_arg);
    if (*q_builds) return do_query_builds(c, q_label);
    if (*q_show) return do_query_show(c, q_build, q_subject);
    if (*q_find) return do_query_find(c, f_build, f_group, f_value);
  } catch (const UsageError& e) {
    return fail(c, kUsage, e.what());
  } catch (const audit::ConfigError& e) {
    return fail(c, kUsage, e.what());
  } catch (const std::exception& e) {
    return fail(c, kIoOrParse, e.what());
  }
  return kUsage;
}

}  // namespace flagtrace::cli
