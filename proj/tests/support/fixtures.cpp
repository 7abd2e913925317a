#include "fixtures.hpp"

#include <unistd.h>

#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "flagtrace/ingest.hpp"

namespace fixtures {

using flagtrace::audit::Rule;

const char* const kRedisExcerpt =
    "# Linux ARM32 needs -latomic at linking time\n"
    "ifneq (,$(findstring armv,$(uname_M)))\n"
    "        FINAL_LIBS+=-latomic\n"
    "endif\n";

const char* const kRocksDbExcerpt =
    "ifeq ($(PLATFORM), OS_MACOSX)\n"
    "ifeq ($(ARCHFLAG), -arch arm64)\n"
    "ifneq ($(MACHINE), arm64)\n"
    "  ...\n"
    "  DISABLE_JEMALLOC=1\n"
    "  PLATFORM_CCFLAGS := $(filter-out -march=native, ...)\n"
    "  PLATFORM_CXXFLAGS := $(filter-out -march=native, ...)\n"
    "endif\n"
    "endif\n"
    "endif\n";

const char* const kOfficialLog =
    "gcc -O2 -fstack-protector-strong -DNDEBUG -c src/main.c -o main.o\n"
    "gcc -O2 -fstack-protector-strong -DNDEBUG -c src/util.c -o util.o\n"
    "gcc main.o util.o -lm -o app\n";

const char* const kDevLog =
    "gcc -O2 -fstack-protector-strong -DNDEBUG -c src/main.c -o main.o\n"
    "gcc -O2 -fno-stack-protector -DNDEBUG -DDEBUG_TRACING -c src/util.c -o util.o\n"
    "gcc main.o util.o -lm -o app\n";

flagtrace::BuildSnapshot snapshot_from_log(const std::string& log, const std::string& label,
                                           const std::string& build_id, const std::string& created) {
  flagtrace::ingest::ParseOptions opts;
  opts.default_cwd = "/work";
  opts.expand_response_files = false;
  auto invocations = flagtrace::ingest::parse_raw_log_text(log, build_id + ".log", opts);
  flagtrace::ingest::BuildMeta meta{build_id, label, created, "/work"};
  return flagtrace::ingest::assemble_snapshot(invocations, meta).snapshot;
}

namespace {

constexpr const char* kHardened = "-O2 -fstack-protector-strong -DNDEBUG";

std::string compile(const std::string& extra, const std::string& src, const std::string& obj,
                    const std::string& cc = "gcc") {
  std::string line = cc + " " + kHardened;
  if (!extra.empty()) line += " " + extra;
  return line + " -c " + src + " -o " + obj + "\n";
}

std::string base_log(const std::string& a_extra = "", const std::string& b_flags_override = "",
                     const std::string& link = "gcc a.o b.o -lm -o app\n") {
  std::string log = compile(a_extra, "src/a.c", "a.o");
  log += b_flags_override.empty() ? compile("", "src/b.c", "b.o") : b_flags_override;
  return log + link;
}

AuditCase make(Rule rule, std::string name, const std::string& seeded, const std::string& clean,
               std::string subject, std::optional<std::string> previous = std::nullopt) {
  AuditCase c{rule, std::move(name), snapshot_from_log(seeded, "official", "seeded", "2024-01-02T00:00:00Z"),
              snapshot_from_log(clean, "official", "clean", "2024-01-02T00:00:00Z"), std::nullopt,
              std::move(subject)};
  if (previous) c.previous = snapshot_from_log(*previous, "official", "previous");
  return c;
}

}  // namespace

std::vector<AuditCase> audit_cases() {
  std::vector<AuditCase> out;
  out.push_back(make(Rule::R1_DebugInRelease, "debug tracing in a release unit", base_log("-DDEBUG_TRACING"),
                     base_log(), "src/a.c"));
  out.push_back(make(Rule::R2_OptInconsistent, "one unit of a target built at -O0",
                     base_log("", "gcc -O2 -fstack-protector-strong -DNDEBUG -O0 -c src/b.c -o b.o\n"), base_log(),
                     "app"));
  out.push_back(make(Rule::R3_DupDependency, "two libssl versions on one link line",
                     base_log("", "", "gcc a.o b.o /opt/ssl-1.1/lib/libssl.so.1.1 /opt/ssl-3/lib/libssl.so.3 -o app\n"),
                     base_log("", "", "gcc a.o b.o /opt/ssl-3/lib/libssl.so.3 -o app\n"), "app"));
  out.push_back(make(Rule::R4_MissingHardening, "release MSVC unit without /GS", "cl /O2 /DNDEBUG /c foo.cxx\n",
                     "cl /O2 /GS /DNDEBUG /c foo.cxx\n", "foo.cxx"));
  std::string cxx_a = compile("-fno-exceptions", "src/a.cpp", "a.o", "g++");
  std::string cxx_a_clean = compile("", "src/a.cpp", "a.o", "g++");
  std::string cxx_b = compile("", "src/b.cpp", "b.o", "g++");
  out.push_back(make(Rule::R5_ExceptionMismatch, "-fno-exceptions unit linked with a default unit",
                     cxx_a + cxx_b + "g++ a.o b.o -o app\n", cxx_a_clean + cxx_b + "g++ a.o b.o -o app\n", "app"));
  out.push_back(make(Rule::R7_LinkOrderDrift, "object order permuted since the previous build",
                     base_log("", "", "gcc b.o a.o -lm -o app\n"), base_log(), "app", base_log()));
  out.push_back(make(Rule::R8_UnresolvedToken, "unexpanded make variable on a compile line",
                     base_log("$(EXTRA_CFLAGS)"), base_log(), "src/a.c"));
  return out;
}

TempDir::TempDir(const std::string& tag) {
  static std::mt19937_64 rng(std::random_device{}());
  path_ = std::filesystem::temp_directory_path() /
          ("flagtrace-" + tag + "-" + std::to_string(::getpid()) + "-" + std::to_string(rng() % 1000000007));
  std::filesystem::create_directories(path_);
}

TempDir::~TempDir() {
  std::error_code ec;
  std::filesystem::remove_all(path_, ec);
}

void write_file(const std::filesystem::path& p, const std::string& content) {
  if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
  std::ofstream f(p, std::ios::binary | std::ios::trunc);
  if (!f) throw std::runtime_error("cannot write " + p.string());
  f << content;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

std::filesystem::path fixture_object() { return FLAGTRACE_FIXTURE_OBJECT; }

}  // namespace fixtures
