#include "flagtrace/store.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <cctype>
#include <cerrno>
#include <cstring>
#include <set>

#include "flagtrace/digest.hpp"
#include "flagtrace/ingest.hpp"
#include "flagtrace/text.hpp"

namespace flagtrace::store {

namespace fs = std::filesystem;

namespace {

constexpr std::string_view kFormatLine = "flagtrace-store\t1";
constexpr std::string_view kIndexHeader = "flagtrace-index\t1";
constexpr std::string_view kSnapshotHeader = "flagtrace-snapshot\t1";

[[noreturn]] void throw_errno(const std::string& what) {
  throw IoError(what + ": " + std::strerror(errno));
}

class Fd {
 public:
  explicit Fd(int fd) : fd_(fd) {}
  Fd(const Fd&) = delete;
  Fd& operator=(const Fd&) = delete;
  ~Fd() {
    if (fd_ >= 0) ::close(fd_);
  }
  int get() const { return fd_; }

 private:
  int fd_;
};

void write_all(int fd, std::string_view bytes, const std::string& what) {
  while (!bytes.empty()) {
    ssize_t n = ::write(fd, bytes.data(), bytes.size());
    if (n < 0) {
      if (errno == EINTR) continue;
      throw_errno(what);
    }
    bytes.remove_prefix(static_cast<std::size_t>(n));
  }
}

void fsync_dir(const fs::path& dir) {
  Fd fd(::open(dir.c_str(), O_RDONLY | O_DIRECTORY));
  if (fd.get() >= 0) ::fsync(fd.get());
}

void write_file_durably(const fs::path& path, std::string_view bytes) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    Fd fd(::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, 0644));
    if (fd.get() < 0) throw_errno("cannot create " + tmp.string());
    write_all(fd.get(), bytes, "write " + tmp.string());
    if (::fsync(fd.get()) != 0) throw_errno("fsync " + tmp.string());
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("rename " + tmp.string() + ": " + ec.message());
  fsync_dir(path.parent_path());
}

// Exclusive advisory lock held for the duration of a write.
class WriteLock {
 public:
  explicit WriteLock(const fs::path& file)
      : fd_(::open(file.c_str(), O_RDWR | O_CREAT | O_CLOEXEC, 0644)) {
    if (fd_.get() < 0) throw_errno("cannot open lock " + file.string());
    while (::flock(fd_.get(), LOCK_EX) != 0) {
      if (errno != EINTR) throw_errno("cannot lock " + file.string());
    }
  }
  ~WriteLock() { ::flock(fd_.get(), LOCK_UN); }

 private:
  Fd fd_;
};

std::string file_name_for(std::string_view build_id) {
  static constexpr char kHex[] = "0123456789ABCDEF";
  std::string out;
  for (unsigned char c : build_id) {
    if (std::isalnum(c) || c == '-' || c == '_' || (c == '.' && !out.empty())) {
      out += static_cast<char>(c);
    } else {
      out += '%';
      out += kHex[c >> 4];
      out += kHex[c & 0xF];
    }
  }
  return out + ".snap";
}

}  // namespace

std::string encode_snapshot(const BuildSnapshot& snapshot) {
  using text::escape_field;
  std::string out = std::string(kSnapshotHeader) + "\n";
  out += "build\t" + escape_field(snapshot.build_id) + "\t" + escape_field(snapshot.label) + "\t" +
         escape_field(snapshot.created) + "\t" + snapshot.content_hash + "\n";
  out += canonical_records(snapshot);
  out += "checksum\t" + sha256_hex(out) + "\n";
  return out;
}

BuildSnapshot decode_snapshot(std::string_view bytes, const flags::Vocabulary& vocabulary) {
  auto corrupt = [](const std::string& why) {
    return StoreError(StoreError::Kind::CorruptSnapshot, why);
  };
  // checksum trailer covers every byte before it
  if (bytes.empty() || bytes.back() != '\n') throw corrupt("snapshot is truncated");
  auto trailer_pos = bytes.rfind("\nchecksum\t", bytes.size() - 2);
  if (trailer_pos == std::string_view::npos) throw corrupt("snapshot has no checksum trailer");
  auto body = bytes.substr(0, trailer_pos + 1);
  auto expected = bytes.substr(trailer_pos + 10, bytes.size() - trailer_pos - 11);
  auto actual = sha256_hex(body);
  if (expected != actual) {
    throw corrupt("snapshot checksum mismatch: expected " + std::string(expected) + ", actual " + actual);
  }

  auto first_nl = body.find('\n');
  if (body.substr(0, first_nl) != kSnapshotHeader) throw corrupt("unknown snapshot format");
  auto second_nl = body.find('\n', first_nl + 1);
  if (second_nl == std::string_view::npos) throw corrupt("missing build line");
  auto fields = text::split_fields(body.substr(first_nl + 1, second_nl - first_nl - 1));
  if (fields.size() != 5 || fields[0] != "build") throw corrupt("malformed build line");

  BuildSnapshot snap;
  snap.build_id = text::unescape_field(fields[1]);
  snap.label = text::unescape_field(fields[2]);
  snap.created = text::unescape_field(fields[3]);
  snap.content_hash = std::string(fields[4]);
  auto records = body.substr(second_nl + 1);
  try {
    parse_records(records, snap, vocabulary);
  } catch (const RecordParseError& e) {
    throw corrupt(e.what());
  }
  auto recomputed = sha256_hex(records);
  if (recomputed != snap.content_hash) {
    throw corrupt("content hash mismatch: expected " + snap.content_hash + ", actual " + recomputed);
  }
  return snap;
}

std::string query_value(const flags::EffectiveFlagSet& set, std::string_view key) {
  if (key.starts_with("define:")) {
    auto it = set.defines.find(std::string(key.substr(7)));
    return it == set.defines.end() ? std::string(kAbsent) : flags::display(it->second);
  }
  auto it = set.scalar_groups.find(std::string(key));
  return it == set.scalar_groups.end() ? std::string(kAbsent) : flags::display(it->second);
}

Store::Store(fs::path root, const flags::Vocabulary& vocabulary)
    : root_(std::move(root)), vocabulary_(&vocabulary) {}

std::vector<IndexEntry> Store::index() const {
  fs::path index_path = root_ / "index.tsv";
  std::error_code ec;
  if (!fs::exists(index_path, ec)) return {};
  std::string content = text::read_file(index_path);
  // A line without its newline is an append in progress.
  auto last_nl = content.rfind('\n');
  content.resize(last_nl == std::string::npos ? 0 : last_nl + 1);
  auto lines = text::split_lines(content);
  if (lines.empty()) return {};
  if (lines[0] != kIndexHeader) {
    throw StoreError(StoreError::Kind::CorruptIndex, "unknown index format in " + index_path.string());
  }
  std::vector<IndexEntry> entries;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = text::split_fields(lines[i]);
    if (f.size() != 5) {
      throw StoreError(StoreError::Kind::CorruptIndex,
                       "malformed index line " + std::to_string(i + 1));
    }
    entries.push_back({text::unescape_field(f[0]), text::unescape_field(f[1]),
                       text::unescape_field(f[2]), std::string(f[3]), text::unescape_field(f[4])});
  }
  std::stable_sort(entries.begin(), entries.end(), [](const IndexEntry& a, const IndexEntry& b) {
    auto ta = ingest::parse_rfc3339(a.created);
    auto tb = ingest::parse_rfc3339(b.created);
    if (ta && tb && *ta != *tb) return *ta < *tb;
    if (!(ta && tb) && a.created != b.created) return a.created < b.created;
    return a.build_id < b.build_id;
  });
  return entries;
}

bool Store::contains(std::string_view build_id) const {
  auto entries = index();
  return std::any_of(entries.begin(), entries.end(),
                     [&](const IndexEntry& e) { return e.build_id == build_id; });
}

std::string Store::put(const BuildSnapshot& snapshot) {
  if (snapshot.build_id.empty()) {
    throw StoreError(StoreError::Kind::NotFound, "snapshot has no build id");
  }
  std::error_code ec;
  fs::create_directories(root_ / "snapshots", ec);
  if (ec) throw IoError("cannot create store at " + root_.string() + ": " + ec.message());

  WriteLock lock(root_ / "lock");
  fs::path format = root_ / "FORMAT";
  if (!fs::exists(format)) {
    write_file_durably(format, std::string(kFormatLine) + "\n");
  } else if (text::trim(text::read_file(format)) != kFormatLine) {
    throw StoreError(StoreError::Kind::NotAStore, root_.string() + " is not a flagtrace store");
  }
  if (contains(snapshot.build_id)) {
    throw StoreError(StoreError::Kind::DuplicateBuildId, "build id already stored: " + snapshot.build_id);
  }

  BuildSnapshot stored = snapshot;
  stored.content_hash = compute_content_hash(snapshot);
  std::string rel = "snapshots/" + file_name_for(stored.build_id);
  fs::path file = root_ / rel;
  if (fs::exists(file)) {
    throw StoreError(StoreError::Kind::DuplicateBuildId, "snapshot file already exists: " + file.string());
  }
  write_file_durably(file, encode_snapshot(stored));

  fs::path index_path = root_ / "index.tsv";
  Fd fd(::open(index_path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644));
  if (fd.get() < 0) throw_errno("cannot open " + index_path.string());
  std::string line;
  if (::lseek(fd.get(), 0, SEEK_END) == 0) line = std::string(kIndexHeader) + "\n";
  line += text::escape_field(stored.build_id) + "\t" + text::escape_field(stored.label) + "\t" +
          text::escape_field(stored.created) + "\t" + stored.content_hash + "\t" +
          text::escape_field(rel) + "\n";
  write_all(fd.get(), line, "append " + index_path.string());
  if (::fsync(fd.get()) != 0) throw_errno("fsync " + index_path.string());
  return stored.content_hash;
}

BuildSnapshot Store::get(std::string_view build_id) const {
  for (const auto& e : index()) {
    if (e.build_id != build_id) continue;
    fs::path file = root_ / e.relative_path;
    std::error_code ec;
    if (!fs::exists(file, ec)) {
      throw StoreError(StoreError::Kind::CorruptSnapshot, "indexed snapshot missing: " + file.string());
    }
    auto snap = decode_snapshot(text::read_file(file), *vocabulary_);
    if (snap.content_hash != e.content_hash) {
      throw StoreError(StoreError::Kind::CorruptSnapshot,
                       "content hash mismatch: expected " + e.content_hash + ", actual " + snap.content_hash);
    }
    if (snap.build_id != e.build_id) {
      throw StoreError(StoreError::Kind::CorruptSnapshot, "snapshot file holds build " + snap.build_id);
    }
    return snap;
  }
  throw StoreError(StoreError::Kind::NotFound, "no such build: " + std::string(build_id));
}

std::vector<HistoryEntry> Store::history(std::string_view label, const std::optional<FlagQuery>& query) const {
  std::vector<HistoryEntry> out;
  for (const auto& e : index()) {
    if (e.label != label) continue;
    auto snap = get(e.build_id);
    HistoryEntry h;
    h.build_id = snap.build_id;
    h.created = snap.created;
    h.content_hash = snap.content_hash;
    h.tu_count = snap.tus.size();
    h.target_count = snap.targets.size();
    if (query) {
      bool scoped = query->subject.has_value();
      for (const auto& tu : snap.tus) {
        if (!scoped || tu.id == *query->subject) h.values[tu.id] = query_value(tu.effective, query->key);
      }
      for (const auto& t : snap.targets) {
        if (!scoped || t.output == *query->subject) h.values[t.output] = query_value(t.effective, query->key);
      }
      h.changed = !out.empty() && out.back().values != h.values;
    } else {
      h.changed = !out.empty() && out.back().content_hash != h.content_hash;
    }
    out.push_back(std::move(h));
  }
  return out;
}

}  // namespace flagtrace::store
