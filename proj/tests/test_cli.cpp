#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cstdlib>
#include <map>
#include <sstream>

#include "json.hpp"

#include "fixtures.hpp"

#include "flagtrace/cli.hpp"

namespace fs = std::filesystem;
using flagtrace::cli::run;

namespace {

struct Result {
  int code;
  std::string out;
  std::string err;
};

Result cli(const std::vector<std::string>& args) {
  std::ostringstream out, err;
  int code = run(args, out, err);
  return {code, out.str(), err.str()};
}

std::map<std::string, std::string> tree(const fs::path& root) {
  std::map<std::string, std::string> out;
  if (!fs::exists(root)) return out;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file()) out[e.path().generic_string()] = fixtures::slurp(e.path());
  }
  return out;
}

// A store holding "official" and "dev" builds of the same project.
struct Workspace {
  fixtures::TempDir dir{"cli"};
  std::string store = (dir / "store").string();

  Workspace() {
    ::unsetenv("FLAGTRACE_STORE");
    fixtures::write_file(dir / "official.log", fixtures::kOfficialLog);
    fixtures::write_file(dir / "dev.log", fixtures::kDevLog);
    REQUIRE(ingest("official.log", "official", "b1").code == 0);
    REQUIRE(ingest("dev.log", "official", "b2", "2024-01-02T00:00:00Z").code == 0);
  }

  Result ingest(const std::string& log, const std::string& label, const std::string& id,
                const std::string& created = "2024-01-01T00:00:00Z") {
    return cli({"--store", store, "ingest", "--log", (dir / log).string(), "--label", label, "--build-id", id,
                "--created", created, "--cwd", "/work", "--root", "/work"});
  }

  Result with_store(std::vector<std::string> args) {
    args.insert(args.begin(), {"--store", store});
    return cli(args);
  }
};

}  // namespace

TEST_CASE("usage errors exit 2") {
  CHECK(cli({}).code == 2);
  CHECK(cli({"frobnicate"}).code == 2);
  CHECK(cli({"diff", "only-one"}).code == 2);
  CHECK(cli({"--format", "xml", "lint", "Makefile"}).code == 2);
  CHECK(cli({"lint", "--threshold", "0", "Makefile"}).code == 2);
  auto help = cli({"--help"});
  CHECK(help.code == 0);
  CHECK(help.out.find("ingest") != std::string::npos);
}

TEST_CASE("diff exit codes") {
  Workspace ws;
  auto same = ws.with_store({"diff", "b1", "b1"});
  CHECK(same.code == 0);
  CHECK(same.out == "no differences\n");
  auto changed = ws.with_store({"diff", "b1", "b2"});
  CHECK(changed.code == 4);
  CHECK(changed.out.find("src/util.c") != std::string::npos);
  CHECK(ws.with_store({"diff", "b1", "nope"}).code == 3);
}

TEST_CASE("audit exit codes") {
  Workspace ws;
  CHECK(ws.with_store({"audit", "b1"}).code == 0);
  auto dev = ws.with_store({"audit", "b2"});
  CHECK(dev.code == 1);  // missing hardening is an error
  CHECK(dev.out.find("R1_DebugInRelease") != std::string::npos);
  CHECK(dev.out.find("R4_MissingHardening") != std::string::npos);

  fixtures::write_file(ws.dir / "perm.log",
                       "gcc -O2 -fstack-protector-strong -DNDEBUG -c src/main.c -o main.o\n"
                       "gcc -O2 -fstack-protector-strong -DNDEBUG -c src/util.c -o util.o\n"
                       "gcc util.o main.o -lm -o app\n");
  REQUIRE(ws.ingest("perm.log", "official", "b3", "2024-01-03T00:00:00Z").code == 0);
  auto drift = ws.with_store({"audit", "b3", "--previous", "b1"});
  CHECK(drift.code == 4);
  CHECK(drift.out.find("R7_LinkOrderDrift") != std::string::npos);
  CHECK(ws.with_store({"audit", "b3"}).code == 0);

  fixtures::write_file(ws.dir / "bad.conf", "version = 9\n");
  CHECK(ws.with_store({"--config", (ws.dir / "bad.conf").string(), "audit", "b1"}).code == 2);
  fixtures::write_file(ws.dir / "only-r1.conf", "version = 1\nrules = R1\n");
  CHECK(ws.with_store({"--config", (ws.dir / "only-r1.conf").string(), "audit", "b2"}).code == 4);
}

TEST_CASE("duplicate build ids are rejected") {
  Workspace ws;
  auto again = ws.ingest("official.log", "official", "b1");
  CHECK(again.code == 3);
  CHECK_FALSE(again.err.empty());
  CHECK(ws.ingest("missing.log", "official", "b9").code == 3);
}

TEST_CASE("lint exit codes") {
  fixtures::TempDir dir("cli-lint");
  fixtures::write_file(dir / "bad.mk", "CXFLAGS += -O2\n");
  fixtures::write_file(dir / "good.mk", "CXXFLAGS += -O2\n");
  auto bad = cli({"lint", (dir / "bad.mk").string()});
  CHECK(bad.code == 4);
  CHECK(bad.out.find("did you mean CXXFLAGS?") != std::string::npos);
  CHECK(cli({"lint", (dir / "good.mk").string()}).code == 0);
  CHECK(cli({"lint", "--vocab", "CXFLAGS", (dir / "bad.mk").string()}).code == 0);
  CHECK(cli({"lint", (dir / "missing.mk").string()}).code == 3);
}

TEST_CASE("json output is deterministic and parseable") {
  Workspace ws;
  for (const auto& args : std::vector<std::vector<std::string>>{{"--format", "json", "diff", "b1", "b2"},
                                                               {"--format", "json", "audit", "b2"},
                                                               {"--format", "json", "history", "official"},
                                                               {"--format", "json", "query", "builds"}}) {
    auto a = ws.with_store(args);
    auto b = ws.with_store(args);
    CHECK(a.out == b.out);
    auto doc = nlohmann::json::parse(a.out);
    CHECK(doc.contains("report_version"));
  }
  auto err = ws.with_store({"--format", "json", "diff", "b1", "nope"});
  CHECK(err.code == 3);
  auto doc = nlohmann::json::parse(err.out);
  CHECK(doc["kind"] == "error");
  CHECK(doc["exit_code"] == 3);
}

TEST_CASE("history and queries") {
  Workspace ws;
  auto h = ws.with_store({"history", "official", "--group", "stack_protector", "--subject", "src/util.c"});
  CHECK(h.code == 0);
  CHECK(h.out.find("-fstack-protector-strong") != std::string::npos);
  CHECK(h.out.find("* ") != std::string::npos);

  auto show = ws.with_store({"query", "show", "b2", "src/util.c"});
  CHECK(show.code == 0);
  CHECK(show.out.find("-DDEBUG_TRACING") != std::string::npos);
  auto found = ws.with_store({"query", "find", "b2", "--group", "stack_protector", "--value", "-fno-stack-protector"});
  CHECK(found.code == 0);
  CHECK(found.out.find("src/util.c") != std::string::npos);
  CHECK(found.out.find("src/main.c") == std::string::npos);
  CHECK(ws.with_store({"query", "show", "b2", "nope.c"}).code == 2);
}

TEST_CASE("only ingest writes to the store") {
  Workspace ws;
  auto before = tree(ws.store);
  ws.with_store({"diff", "b1", "b2"});
  ws.with_store({"audit", "b2"});
  ws.with_store({"history", "official"});
  ws.with_store({"query", "builds"});
  ws.with_store({"query", "show", "b1", "src/main.c"});
  CHECK(tree(ws.store) == before);

  // Reads against a store that does not exist do not create one.
  auto ghost = (ws.dir / "ghost").string();
  CHECK(cli({"--store", ghost, "query", "builds"}).code == 0);
  CHECK_FALSE(fs::exists(ghost));
}

TEST_CASE("stamp and read-stamp") {
  Workspace ws;
  auto obj = (ws.dir / "util.o").string();
  fs::copy_file(fixtures::fixture_object(), obj);
  CHECK(ws.with_store({"stamp", obj, "--build-id", "b2", "--subject", "src/util.c"}).code == 0);
  auto read = cli({"read-stamp", obj});
  CHECK(read.code == 0);
  CHECK(read.out.find("b2") != std::string::npos);
  CHECK(read.out.find("src/util.c") != std::string::npos);
  auto bytes = fixtures::slurp(obj);
  CHECK(ws.with_store({"stamp", obj, "--build-id", "b2", "--subject", "src/util.c"}).code == 0);
  CHECK(fixtures::slurp(obj) == bytes);
  CHECK(ws.with_store({"stamp", obj, "--build-id", "b2", "--subject", "nope.c"}).code == 2);
  fixtures::write_file(ws.dir / "plain.txt", "text");
  CHECK(cli({"read-stamp", (ws.dir / "plain.txt").string()}).code == 3);
}
