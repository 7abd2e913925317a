#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "flagtrace/audit.hpp"
#include "flagtrace/snapshot.hpp"

namespace fixtures {

// Makefile excerpts from the Redis and RocksDB build files, verbatim.
extern const char* const kRedisExcerpt;
extern const char* const kRocksDbExcerpt;

// Ingests a raw log held in memory. Paths resolve against /work, which is
// also the root, so TU ids come out as "src/a.c".
flagtrace::BuildSnapshot snapshot_from_log(const std::string& log, const std::string& label,
                                           const std::string& build_id,
                                           const std::string& created = "2024-01-01T00:00:00Z");

// One audit scenario: `seeded` carries exactly one anomaly of `rule`,
// `clean` is the same build without it.
struct AuditCase {
  flagtrace::audit::Rule rule;
  std::string name;
  flagtrace::BuildSnapshot seeded;
  flagtrace::BuildSnapshot clean;
  std::optional<flagtrace::BuildSnapshot> previous;
  std::string expected_subject;
};

std::vector<AuditCase> audit_cases();

// The two logs of the end-to-end workflow: "official" and "dev" builds that
// differ in one hardening flag and one define.
extern const char* const kOfficialLog;
extern const char* const kDevLog;

class TempDir {
 public:
  explicit TempDir(const std::string& tag);
  ~TempDir();
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

void write_file(const std::filesystem::path& p, const std::string& content);
std::string slurp(const std::filesystem::path& p);

// An ELF64 relocatable object compiled as part of the test build.
std::filesystem::path fixture_object();

}  // namespace fixtures
