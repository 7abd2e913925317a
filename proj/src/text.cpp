#include "flagtrace/text.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

#include "flagtrace/error.hpp"

namespace flagtrace::text {

std::string escape_field(std::string_view raw) {
  std::string out;
  out.reserve(raw.size());
  for (char c : raw) {
    switch (c) {
      case '\\': out += "\\\\"; break;
      case '\t': out += "\\t"; break;
      case '\n': out += "\\n"; break;
      case '\r': out += "\\r"; break;
      default: out += c;
    }
  }
  return out;
}

std::string unescape_field(std::string_view escaped) {
  std::string out;
  out.reserve(escaped.size());
  for (std::size_t i = 0; i < escaped.size(); ++i) {
    char c = escaped[i];
    if (c != '\\' || i + 1 == escaped.size()) {
      out += c;
      continue;
    }
    char n = escaped[++i];
    switch (n) {
      case 't': out += '\t'; break;
      case 'n': out += '\n'; break;
      case 'r': out += '\r'; break;
      default: out += n;
    }
  }
  return out;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    if (tab == std::string_view::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, tab - start));
    start = tab + 1;
  }
}

std::string utf8_lossy(std::string_view bytes) {
  static constexpr std::string_view kReplacement = "\xEF\xBF\xBD";
  std::string out;
  out.reserve(bytes.size());
  std::size_t i = 0;
  const std::size_t n = bytes.size();
  while (i < n) {
    auto b0 = static_cast<unsigned char>(bytes[i]);
    if (b0 < 0x80) {
      out += static_cast<char>(b0);
      ++i;
      continue;
    }
    std::size_t len = 0;
    unsigned char lo = 0x80, hi = 0xBF;
    if (b0 >= 0xC2 && b0 <= 0xDF) {
      len = 2;
    } else if (b0 >= 0xE0 && b0 <= 0xEF) {
      len = 3;
      if (b0 == 0xE0) lo = 0xA0;
      if (b0 == 0xED) hi = 0x9F;
    } else if (b0 >= 0xF0 && b0 <= 0xF4) {
      len = 4;
      if (b0 == 0xF0) lo = 0x90;
      if (b0 == 0xF4) hi = 0x8F;
    }
    if (len == 0) {
      out += kReplacement;
      ++i;
      continue;
    }
    // Maximal-subpart replacement: consume the valid prefix of a broken
    // sequence as one replacement character.
    std::size_t j = 1;
    bool ok = true;
    for (; j < len; ++j) {
      if (i + j >= n) {
        ok = false;
        break;
      }
      auto b = static_cast<unsigned char>(bytes[i + j]);
      unsigned char l = j == 1 ? lo : 0x80;
      unsigned char h = j == 1 ? hi : 0xBF;
      if (b < l || b > h) {
        ok = false;
        break;
      }
    }
    if (ok) {
      out.append(bytes.substr(i, len));
      i += len;
    } else {
      out += kReplacement;
      i += j;
    }
  }
  return out;
}

std::vector<std::string> split_lines(std::string_view content) {
  std::vector<std::string> lines;
  std::size_t start = 0;
  while (start < content.size()) {
    auto nl = content.find('\n', start);
    std::string_view line = nl == std::string_view::npos
                                ? content.substr(start)
                                : content.substr(start, nl - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    lines.emplace_back(line);
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return lines;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  if (in.bad()) throw IoError("read failed: " + path.string());
  return std::move(buf).str();
}

std::string to_lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

std::string_view trim(std::string_view s) {
  auto is_space = [](char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n'; };
  while (!s.empty() && is_space(s.front())) s.remove_prefix(1);
  while (!s.empty() && is_space(s.back())) s.remove_suffix(1);
  return s;
}

namespace {

bool has_drive(std::string_view p) {
  return p.size() >= 2 && std::isalpha(static_cast<unsigned char>(p[0])) && p[1] == ':';
}

}  // namespace

bool is_absolute_path(std::string_view path) {
  if (path.empty()) return false;
  if (path[0] == '/' || path[0] == '\\') return true;
  return has_drive(path) && path.size() >= 3 && (path[2] == '/' || path[2] == '\\');
}

std::string normalize_path(std::string_view cwd, std::string_view path) {
  std::string joined;
  if (is_absolute_path(path) || cwd.empty()) {
    joined = path;
  } else {
    joined = std::string(cwd) + "/" + std::string(path);
  }
  std::replace(joined.begin(), joined.end(), '\\', '/');

  std::string prefix;
  std::string_view rest = joined;
  if (has_drive(rest)) {
    prefix = std::string(rest.substr(0, 2));
    rest.remove_prefix(2);
  }
  bool rooted = !rest.empty() && rest[0] == '/';
  if (rooted) prefix += '/';

  std::vector<std::string_view> segs;
  std::size_t start = 0;
  while (start <= rest.size()) {
    auto slash = rest.find('/', start);
    auto seg = rest.substr(start, slash == std::string_view::npos ? std::string_view::npos
                                                                 : slash - start);
    if (seg.empty() || seg == ".") {
      // skip
    } else if (seg == "..") {
      if (!segs.empty() && segs.back() != "..") {
        segs.pop_back();
      } else if (!rooted) {
        segs.push_back(seg);
      }
    } else {
      segs.push_back(seg);
    }
    if (slash == std::string_view::npos) break;
    start = slash + 1;
  }

  std::string out = prefix;
  for (std::size_t i = 0; i < segs.size(); ++i) {
    if (i) out += '/';
    out += segs[i];
  }
  if (out.empty()) out = ".";
  return out;
}

std::string_view basename(std::string_view path) {
  auto pos = path.find_last_of("/\\");
  return pos == std::string_view::npos ? path : path.substr(pos + 1);
}

std::string_view strip_drive(std::string_view path) {
  if (has_drive(path)) path.remove_prefix(2);
  return path;
}

}  // namespace flagtrace::text
