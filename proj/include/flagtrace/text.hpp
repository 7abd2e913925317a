#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace flagtrace::text {

// Field escaping for the tab-separated record formats. Backslash, tab, CR
// and LF are the only bytes that get escaped.
std::string escape_field(std::string_view raw);
std::string unescape_field(std::string_view escaped);

// Splits on '\t' without unescaping.
std::vector<std::string_view> split_fields(std::string_view line);

// Replaces every invalid UTF-8 sequence with U+FFFD.
std::string utf8_lossy(std::string_view bytes);

// Splits on LF, stripping one trailing CR per line. A trailing newline does
// not produce an empty final line.
std::vector<std::string> split_lines(std::string_view content);

std::string read_file(const std::filesystem::path& path);

std::string to_lower(std::string_view s);

std::string_view trim(std::string_view s);

bool is_absolute_path(std::string_view path);

// Lexical normalization: backslashes become '/', "." segments vanish, ".."
// pops a segment where possible, repeated separators collapse. Relative
// paths are joined to cwd first. No file system access.
std::string normalize_path(std::string_view cwd, std::string_view path);

// Final path component, accepting both '/' and '\' as separators.
std::string_view basename(std::string_view path);

// Removes a leading "X:" drive designator from a normalized path.
std::string_view strip_drive(std::string_view path);

}  // namespace flagtrace::text
