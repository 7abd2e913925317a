#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "fixtures.hpp"
#include "generators.hpp"

#include "flagtrace/ingest.hpp"

using namespace flagtrace;
using namespace flagtrace::ingest;
using cmdline::Family;

namespace {

ParseOptions opts(std::string cwd = "/work") {
  ParseOptions o;
  o.default_cwd = std::move(cwd);
  return o;
}

std::vector<std::string> words(const cmdline::RawInvocation& inv) {
  std::vector<std::string> out;
  for (const auto& t : inv.tokens) out.push_back(t.text);
  return out;
}

BuildMeta meta(std::string id = "b1") { return BuildMeta{std::move(id), "dev", "2024-01-01T00:00:00Z", "/work"}; }

}  // namespace

TEST_CASE("raw log keeps compiler lines and drops the rest") {
  const char* log =
      "make[1]: Entering directory '/work/sub'\n"
      "[3/10] ccache gcc -O2 -c a.c -o a.o\n"
      "echo done\n"
      "gcc -O2 \\\n"
      "  -c b.c -o b.o\n"
      "make[1]: Leaving directory '/work/sub'\n"
      "cd /work/lib && g++ -c x.cpp -o x.o && touch stamp\n";
  std::vector<Diagnostic> diags;
  auto invs = parse_raw_log_text(log, "build.log", opts(), &diags);
  REQUIRE(invs.size() == 3);
  CHECK(words(invs[0]) == std::vector<std::string>{"gcc", "-O2", "-c", "a.c", "-o", "a.o"});
  CHECK(invs[0].cwd == "/work/sub");
  CHECK(invs[0].source.number == 2);
  CHECK(words(invs[1]).size() == 6);
  CHECK(invs[1].source.number == 4);
  CHECK(invs[2].cwd == "/work/lib");
  CHECK(words(invs[2]).back() == "x.o");
  CHECK(diags.empty());
}

TEST_CASE("raw log reports untokenizable lines") {
  std::vector<Diagnostic> diags;
  auto invs = parse_raw_log_text("gcc -c 'a.c\ngcc -c b.c\n", "l", opts(), &diags);
  CHECK(invs.size() == 1);
  REQUIRE(diags.size() == 1);
  CHECK(diags[0].where.number == 1);
}

TEST_CASE("MSVC lines use CRT rules") {
  auto invs = parse_raw_log_text("\"C:\\VS\\bin\\cl.exe\" /O2 /D\"MSG=a b\" /c foo.cxx\n", "l", opts("C:/w"));
  REQUIRE(invs.size() == 1);
  CHECK(invs[0].dialect.family == Family::Msvc);
  CHECK(words(invs[0])[2] == "/DMSG=a b");
}

TEST_CASE("compilation database with arguments and command") {
  const char* db = R"([
    {"directory": "/work", "file": "a.c", "arguments": ["gcc", "-O2", "-c", "a.c", "-o", "a.o"]},
    {"directory": "/work/sub", "file": "b.c", "command": "gcc -DMSG=\"x y\" -c b.c -o b.o"}
  ])";
  auto invs = parse_compilation_db_text(db, "compile_commands.json", opts());
  REQUIRE(invs.size() == 2);
  CHECK(words(invs[0]).size() == 6);
  CHECK(invs[1].cwd == "/work/sub");
  CHECK(words(invs[1])[1] == "-DMSG=x y");
  CHECK(invs[1].source.number == 1);

  auto snap = assemble_snapshot(invs, meta()).snapshot;
  REQUIRE(snap.tus.size() == 2);
  CHECK(snap.tus[0].id == "a.c");
  CHECK(snap.tus[1].id == "sub/b.c");
}

TEST_CASE("compilation database errors") {
  auto kind = [](const std::string& text) {
    try {
      parse_compilation_db_text(text, "db", opts());
    } catch (const IngestError& e) {
      return e.kind();
    }
    FAIL("expected an error");
    return IngestError::Kind::MissingBuildId;
  };
  CHECK(kind("{") == IngestError::Kind::MalformedDb);
  CHECK(kind("{}") == IngestError::Kind::MalformedDb);
  CHECK(kind(R"([{"file": "a.c", "command": "gcc a.c"}])") == IngestError::Kind::MalformedDb);
  CHECK(kind(R"([{"directory": "/", "file": "a.c"}])") == IngestError::Kind::MalformedDb);
  CHECK(kind(R"([{"directory": "/", "file": "a.c", "arguments": []}])") == IngestError::Kind::MalformedDb);
}

TEST_CASE("wrapper spool orders by timestamp then file and line") {
  fixtures::TempDir dir("spool");
  fixtures::write_file(dir / "b.jsonl",
                       R"({"v":1,"ts":"2024-01-01T00:00:01Z","cwd":"/work","tool":"gcc","argv":["gcc","-c","b.c"]})"
                       "\n");
  fixtures::write_file(
      dir / "a.jsonl",
      R"({"ts":"2024-01-01T00:00:02Z","cwd":"/work","tool":"gcc","argv":["gcc","-c","c.c"]})"
      "\n\n"
      R"({"ts":"2024-01-01T01:00:01+01:00","cwd":"/work","tool":"gcc","argv":["gcc","-c","a.c"]})"
      "\n");
  auto invs = parse_wrapper_spool(dir.path(), opts());
  REQUIRE(invs.size() == 3);
  // a.c and b.c share an instant; a.jsonl sorts first.
  CHECK(words(invs[0]).back() == "a.c");
  CHECK(words(invs[1]).back() == "b.c");
  CHECK(words(invs[2]).back() == "c.c");
  CHECK(invs[0].source.number == 3);

  fixtures::write_file(dir / "c.jsonl", R"({"v":2,"ts":"x","cwd":"/","tool":"gcc","argv":["gcc"]})");
  CHECK_THROWS_AS(parse_wrapper_spool(dir.path(), opts()), IngestError);
  CHECK_THROWS(parse_wrapper_spool(dir / "nope", opts()));
}

TEST_CASE("rfc3339 parsing") {
  CHECK(parse_rfc3339("1970-01-01T00:00:00Z") == 0);
  CHECK(parse_rfc3339("1970-01-01T00:00:01.5Z") == 1500000000);
  CHECK(parse_rfc3339("1970-01-01T01:00:00+01:00") == 0);
  CHECK_FALSE(parse_rfc3339("yesterday"));
  CHECK_FALSE(parse_rfc3339("1970-13-01T00:00:00Z"));
}

TEST_CASE("assemble links TUs to targets through objects and archives") {
  const char* log =
      "gcc -O2 -c src/a.c -o a.o\n"
      "gcc -O2 -c src/b.c -o b.o\n"
      "ar rcs libb.a b.o\n"
      "gcc a.o libb.a -latomic /usr/lib/libz.so -o app\n"
      "gcc -E src/a.c\n";
  auto invs = parse_raw_log_text(log, "l", opts());
  auto result = assemble_snapshot(invs, meta());
  const auto& snap = result.snapshot;
  CHECK(snap.tus.size() == 2);
  REQUIRE(snap.targets.size() == 2);
  const auto* app = snap.find_target("app");
  REQUIRE(app);
  CHECK(app->inputs == std::vector<std::string>{"a.o", "libb.a", "-latomic", "/usr/lib/libz.so"});
  CHECK(app->member_tus == std::vector<std::string>{"src/a.c", "src/b.c"});
  CHECK(app->external_inputs == std::vector<std::string>{"-latomic", "/usr/lib/libz.so"});
  REQUIRE(snap.find_target("libb.a"));
  CHECK(snap.find_target("libb.a")->member_tus == std::vector<std::string>{"src/b.c"});
  REQUIRE(result.skipped.size() == 1);
  CHECK(result.skipped[0].reason == "preprocess only");
  // Every invocation either produced a record or is accounted as skipped.
  CHECK(snap.tus.size() + snap.targets.size() + result.skipped.size() == invs.size());
}

TEST_CASE("compile-and-link commands make both records") {
  auto invs = parse_raw_log_text("gcc -O2 src/a.c src/b.c -o tool\n", "l", opts());
  auto snap = assemble_snapshot(invs, meta()).snapshot;
  CHECK(snap.tus.size() == 2);
  REQUIRE(snap.targets.size() == 1);
  CHECK(snap.targets[0].member_tus == std::vector<std::string>{"src/a.c", "src/b.c"});
}

TEST_CASE("duplicate outputs are rejected") {
  auto invs = parse_raw_log_text("gcc -c a.c -o x.o\ngcc -c b.c -o x.o\n", "l", opts());
  try {
    assemble_snapshot(invs, meta());
    FAIL("expected DuplicateOutput");
  } catch (const IngestError& e) {
    CHECK(e.kind() == IngestError::Kind::DuplicateOutput);
  }
  invs = parse_raw_log_text("gcc a.o -o app\ngcc b.o -o app\n", "l", opts());
  CHECK_THROWS_AS(assemble_snapshot(invs, meta()), IngestError);
  CHECK_THROWS_AS(assemble_snapshot(invs, BuildMeta{}), IngestError);
}

TEST_CASE("one source compiled twice gets distinct ids") {
  auto invs = parse_raw_log_text("gcc -c a.c -o a1.o\ngcc -fPIC -c a.c -o a2.o\n", "l", opts());
  auto snap = assemble_snapshot(invs, meta()).snapshot;
  REQUIRE(snap.tus.size() == 2);
  CHECK(snap.tus[0].id == "a.c -> a1.o");
  CHECK(snap.tus[1].id == "a.c -> a2.o");
}

TEST_CASE("assembly is deterministic and independent of metadata") {
  auto invs = parse_raw_log_text(fixtures::kDevLog, "l", opts());
  auto s1 = assemble_snapshot(invs, meta("x")).snapshot;
  auto s2 = assemble_snapshot(invs, meta("x")).snapshot;
  CHECK(s1 == s2);
  auto s3 = assemble_snapshot(invs, BuildMeta{"y", "other", "2025-01-01T00:00:00Z", "/work"}).snapshot;
  CHECK(s1.content_hash == s3.content_hash);
  CHECK(s1.content_hash.size() == 64);
}

TEST_CASE("every TU's effective set matches classify+resolve of its invocation") {
  gen::Rng rng(31);
  for (int i = 0; i < 100; ++i) {
    auto snap = gen::snapshot(rng, "g" + std::to_string(i));
    for (const auto& tu : snap.tus) {
      CHECK(tu.effective == flags::resolve(classify_invocation(tu.invocation)));
    }
    for (const auto& t : snap.targets) {
      for (const auto& m : t.member_tus) CHECK(snap.find_tu(m) != nullptr);
    }
  }
}
