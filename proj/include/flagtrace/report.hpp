#pragma once

namespace flagtrace {

// Output format shared by every report (diff, audit, lint, query).
enum class Format { Text, Json };

// Version stamped into every JSON report as "report_version".
inline constexpr int kReportVersion = 1;

}  // namespace flagtrace
