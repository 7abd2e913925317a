#include "flagtrace/elfnote.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <sys/stat.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>

#include "flagtrace/digest.hpp"
#include "flagtrace/text.hpp"

namespace flagtrace::elf {

namespace fs = std::filesystem;
using Kind = ElfError::Kind;

namespace {

constexpr std::size_t kEhdrSize = 64;
constexpr std::size_t kShdrSize = 64;
constexpr std::uint32_t kShtNote = 7;
constexpr std::uint32_t kShtNobits = 8;
constexpr std::uint32_t kShtStrtab = 3;
constexpr std::uint16_t kShnLoreserve = 0xff00;
constexpr std::uint16_t kShnXindex = 0xffff;
constexpr std::string_view kPayloadHeader = "flagtrace-note\t1";

template <typename T>
T get(std::string_view b, std::size_t off) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(b[off + i])) << (8 * i);
  return v;
}

template <typename T>
void put(std::string& b, std::size_t off, T v) {
  for (std::size_t i = 0; i < sizeof(T); ++i) b[off + i] = static_cast<char>((v >> (8 * i)) & 0xff);
}

template <typename T>
void append(std::string& b, T v) {
  b.append(sizeof(T), '\0');
  put(b, b.size() - sizeof(T), v);
}

struct Shdr {
  std::uint32_t name = 0, type = 0;
  std::uint64_t flags = 0, addr = 0, offset = 0, size = 0;
  std::uint32_t link = 0, info = 0;
  std::uint64_t addralign = 0, entsize = 0;
};

Shdr read_shdr(std::string_view b, std::size_t off) {
  return {get<std::uint32_t>(b, off),      get<std::uint32_t>(b, off + 4),  get<std::uint64_t>(b, off + 8),
          get<std::uint64_t>(b, off + 16), get<std::uint64_t>(b, off + 24), get<std::uint64_t>(b, off + 32),
          get<std::uint32_t>(b, off + 40), get<std::uint32_t>(b, off + 44), get<std::uint64_t>(b, off + 48),
          get<std::uint64_t>(b, off + 56)};
}

void write_shdr(std::string& b, const Shdr& s) {
  append(b, s.name);
  append(b, s.type);
  append(b, s.flags);
  append(b, s.addr);
  append(b, s.offset);
  append(b, s.size);
  append(b, s.link);
  append(b, s.info);
  append(b, s.addralign);
  append(b, s.entsize);
}

struct Image {
  std::vector<Shdr> sections;
  std::size_t shstrndx = 0;
};

void check_header(std::string_view b) {
  if (b.size() < 4 || b.substr(0, 4) != "\x7f" "ELF") throw ElfError(Kind::NotElf, "not an ELF file");
  if (b.size() < kEhdrSize) throw ElfError(Kind::MalformedElf, "truncated ELF header");
  if (b[4] != 2) throw ElfError(Kind::UnsupportedClass, "only ELF64 is supported");
  if (b[5] != 1) throw ElfError(Kind::UnsupportedClass, "only little-endian ELF is supported");
}

Image parse(std::string_view b) {
  check_header(b);
  Image img;
  auto shoff = get<std::uint64_t>(b, 40);
  auto shentsize = get<std::uint16_t>(b, 58);
  std::uint64_t shnum = get<std::uint16_t>(b, 60);
  std::uint64_t shstrndx = get<std::uint16_t>(b, 62);
  if (shoff == 0) {
    if (shnum != 0) throw ElfError(Kind::MalformedElf, "section count without section header table");
    return img;
  }
  if (shentsize != kShdrSize) throw ElfError(Kind::MalformedElf, "unexpected section header size");
  if (shoff > b.size() || b.size() - shoff < kShdrSize) throw ElfError(Kind::MalformedElf, "section headers out of range");
  Shdr first = read_shdr(b, shoff);
  if (shnum == 0) shnum = first.size;  // extended numbering
  if (shstrndx == kShnXindex) shstrndx = first.link;
  if (shnum > (b.size() - shoff) / kShdrSize) throw ElfError(Kind::MalformedElf, "section headers out of range");
  for (std::uint64_t i = 0; i < shnum; ++i) {
    Shdr s = read_shdr(b, shoff + i * kShdrSize);
    if (s.type != kShtNobits && (s.offset > b.size() || s.size > b.size() - s.offset)) {
      throw ElfError(Kind::MalformedElf, "section " + std::to_string(i) + " lies outside the file");
    }
    img.sections.push_back(s);
  }
  if (shnum > 0 && shstrndx >= shnum) throw ElfError(Kind::MalformedElf, "bad section name table index");
  img.shstrndx = static_cast<std::size_t>(shstrndx);
  return img;
}

std::string_view section_bytes(std::string_view b, const Shdr& s) {
  if (s.type == kShtNobits) return {};
  return b.substr(s.offset, s.size);
}

std::string section_name(std::string_view b, const Image& img, const Shdr& s) {
  if (img.sections.empty()) return {};
  auto strtab = section_bytes(b, img.sections[img.shstrndx]);
  if (s.name >= strtab.size()) return {};
  auto rest = strtab.substr(s.name);
  return std::string(rest.substr(0, rest.find('\0')));
}

const Shdr* find_section(std::string_view b, const Image& img, std::string_view name) {
  for (std::size_t i = 1; i < img.sections.size(); ++i) {
    if (section_name(b, img, img.sections[i]) == name) return &img.sections[i];
  }
  return nullptr;
}

// Offset of `name` as a complete NUL-terminated entry in a string table.
std::optional<std::uint32_t> find_string(std::string_view strtab, std::string_view name) {
  std::string needle = std::string(name) + '\0';
  for (std::size_t pos = strtab.find(needle); pos != std::string_view::npos; pos = strtab.find(needle, pos + 1)) {
    if (pos == 0 || strtab[pos - 1] == '\0') return static_cast<std::uint32_t>(pos);
  }
  return std::nullopt;
}

void align(std::string& b, std::size_t a) { b.resize((b.size() + a - 1) / a * a, '\0'); }

}  // namespace

std::string encode_payload(const NotePayload& p) {
  std::string out(kPayloadHeader);
  out += '\n';
  out += "build\t" + text::escape_field(p.build_id) + "\n";
  out += "subject\t" + text::escape_field(p.subject) + "\n";
  out += "digest\t" + p.effective_digest + "\n";
  if (p.flags_text) out += "flags\t" + text::escape_field(*p.flags_text) + "\n";
  return out;
}

NotePayload decode_payload(std::string_view bytes) {
  auto bad = [](const std::string& why) { return ElfError(Kind::MalformedNote, "bad flagtrace payload: " + why); };
  auto lines = text::split_lines(bytes);
  if (lines.empty() || lines[0] != kPayloadHeader) throw bad("missing header");
  NotePayload p;
  bool build = false, subject = false, digest = false;
  for (std::size_t i = 1; i < lines.size(); ++i) {
    auto f = text::split_fields(lines[i]);
    if (f.size() != 2) throw bad("line " + std::to_string(i + 1));
    if (f[0] == "build" && !build) {
      p.build_id = text::unescape_field(f[1]);
      build = true;
    } else if (f[0] == "subject" && !subject) {
      p.subject = text::unescape_field(f[1]);
      subject = true;
    } else if (f[0] == "digest" && !digest) {
      p.effective_digest = std::string(f[1]);
      digest = true;
    } else if (f[0] == "flags" && !p.flags_text) {
      p.flags_text = text::unescape_field(f[1]);
    } else {
      throw bad("unexpected field '" + std::string(f[0]) + "'");
    }
  }
  if (!build || !subject || !digest) throw bad("missing field");
  if (p.flags_text && sha256_hex(*p.flags_text) != p.effective_digest) throw bad("digest does not match flags");
  return p;
}

NotePayload make_payload(std::string build_id, std::string subject, const flags::EffectiveFlagSet& effective) {
  NotePayload p;
  p.build_id = std::move(build_id);
  p.subject = std::move(subject);
  p.flags_text = flags::canonical_serialize(effective);
  p.effective_digest = sha256_hex(*p.flags_text);
  if (encode_payload(p).size() > kMaxPayload) p.flags_text.reset();
  return p;
}

std::string encode_note(std::string_view name, std::uint32_t type, std::string_view desc) {
  std::string out;
  append(out, static_cast<std::uint32_t>(name.size() + 1));
  append(out, static_cast<std::uint32_t>(desc.size()));
  append(out, type);
  out += name;
  out += '\0';
  align(out, 4);
  out += desc;
  align(out, 4);
  return out;
}

std::string stamp_image(std::string_view image, const NotePayload& payload) {
  std::string desc = encode_payload(payload);
  if (desc.size() > kMaxPayload) throw ElfError(Kind::MalformedNote, "payload exceeds 64 KiB");
  Image img = parse(image);
  std::string out(image);

  std::vector<Shdr> sections = img.sections;
  std::size_t shstrndx = img.shstrndx;
  if (sections.empty()) {
    // No section table at all: start one with the null section and a name table.
    sections.push_back(Shdr{});
    std::string strtab = std::string(1, '\0') + ".shstrtab" + '\0';
    Shdr s;
    s.name = 1;
    s.type = kShtStrtab;
    s.offset = out.size();
    s.size = strtab.size();
    s.addralign = 1;
    out += strtab;
    sections.push_back(s);
    shstrndx = 1;
  } else {
    for (std::size_t i = 1; i + 1 < sections.size(); ++i) {
      if (section_name(image, img, sections[i]) == kSectionName) {
        throw ElfError(Kind::MalformedElf, "existing flagtrace note is not the last section");
      }
    }
    if (sections.size() > 1 && section_name(image, img, sections.back()) == kSectionName) {
      // Restamp: cut the old note and header table; everything before it
      // is what the previous stamp started from.
      out.resize(sections.back().offset);
      sections.pop_back();
    }
  }

  std::string_view strtab = std::string_view(out).substr(sections[shstrndx].offset, sections[shstrndx].size);
  auto name_off = find_string(strtab, kSectionName);
  if (!name_off) {
    // Relocate the name table: the copy gains the new name, the old bytes
    // stay where they were.
    std::string grown(strtab);
    if (grown.empty() || grown.back() != '\0') grown += '\0';
    name_off = static_cast<std::uint32_t>(grown.size());
    grown += kSectionName;
    grown += '\0';
    sections[shstrndx].offset = out.size();
    sections[shstrndx].size = grown.size();
    out += grown;
  }

  align(out, 4);
  Shdr note;
  note.name = *name_off;
  note.type = kShtNote;
  note.offset = out.size();
  note.addralign = 4;
  std::string record = encode_note(kNoteName, kNoteType, desc);
  note.size = record.size();
  out += record;
  sections.push_back(note);

  align(out, 8);
  std::uint64_t shoff = out.size();
  std::uint64_t count = sections.size();
  if (count >= kShnLoreserve) {
    put<std::uint16_t>(out, 60, 0);
    sections[0].size = count;
  } else {
    put<std::uint16_t>(out, 60, static_cast<std::uint16_t>(count));
    sections[0].size = 0;
  }
  if (shstrndx >= kShnLoreserve) {
    put<std::uint16_t>(out, 62, kShnXindex);
    sections[0].link = static_cast<std::uint32_t>(shstrndx);
  } else {
    put<std::uint16_t>(out, 62, static_cast<std::uint16_t>(shstrndx));
    sections[0].link = 0;
  }
  put<std::uint64_t>(out, 40, shoff);
  put<std::uint16_t>(out, 58, static_cast<std::uint16_t>(kShdrSize));
  for (const auto& s : sections) write_shdr(out, s);
  return out;
}

std::optional<NotePayload> read_stamp_image(std::string_view image) {
  Image img = parse(image);
  const Shdr* sec = find_section(image, img, kSectionName);
  if (!sec) return std::nullopt;
  auto body = section_bytes(image, *sec);
  std::size_t pos = 0;
  while (pos < body.size()) {
    std::uint64_t at = sec->offset + pos;
    if (body.size() - pos < 12) throw ElfError(Kind::MalformedNote, "truncated note header", at);
    std::size_t namesz = get<std::uint32_t>(body, pos);
    std::size_t descsz = get<std::uint32_t>(body, pos + 4);
    auto type = get<std::uint32_t>(body, pos + 8);
    std::size_t avail = body.size() - pos - 12;
    if (pad4(namesz) > avail || pad4(descsz) > avail - pad4(namesz)) {
      throw ElfError(Kind::MalformedNote, "note at offset " + std::to_string(at) + " overruns its section", at);
    }
    auto name = body.substr(pos + 12, namesz);
    auto desc = body.substr(pos + 12 + pad4(namesz), descsz);
    if (type == kNoteType && name.size() == kNoteName.size() + 1 && name.substr(0, kNoteName.size()) == kNoteName) {
      try {
        return decode_payload(desc);
      } catch (const ElfError& e) {
        throw ElfError(Kind::MalformedNote, e.what(), at);
      }
    }
    pos += 12 + pad4(namesz) + pad4(descsz);
  }
  return std::nullopt;
}

std::vector<std::string> read_comment_image(std::string_view image) {
  Image img = parse(image);
  std::vector<std::string> out;
  const Shdr* sec = find_section(image, img, ".comment");
  if (!sec) return out;
  auto body = section_bytes(image, *sec);
  std::size_t start = 0;
  while (start < body.size()) {
    auto nul = body.find('\0', start);
    if (nul == std::string_view::npos) nul = body.size();
    if (nul > start) out.emplace_back(body.substr(start, nul - start));
    start = nul + 1;
  }
  return out;
}

namespace {

[[noreturn]] void io_fail(const std::string& what) {
  throw ElfError(Kind::Io, what + ": " + std::strerror(errno));
}

std::string read_all(int fd, const fs::path& path) {
  std::string out;
  char buf[65536];
  for (off_t off = 0;;) {
    ssize_t n = ::pread(fd, buf, sizeof buf, off);
    if (n < 0) {
      if (errno == EINTR) continue;
      io_fail("read " + path.string());
    }
    if (n == 0) break;
    out.append(buf, static_cast<std::size_t>(n));
    off += n;
  }
  return out;
}

std::string read_path(const fs::path& path) {
  try {
    return text::read_file(path);
  } catch (const IoError& e) {
    throw ElfError(Kind::Io, e.what());
  }
}

}  // namespace

void stamp(const fs::path& path, const NotePayload& payload) {
  for (;;) {
    int fd = ::open(path.c_str(), O_RDONLY | O_CLOEXEC);
    if (fd < 0) io_fail("open " + path.string());
    struct Closer {
      int fd;
      ~Closer() { ::close(fd); }
    } closer{fd};
    while (::flock(fd, LOCK_EX) != 0) {
      if (errno != EINTR) io_fail("lock " + path.string());
    }
    // Another stamper may have replaced the file while we waited.
    struct stat held{}, now{};
    if (::fstat(fd, &held) != 0) io_fail("stat " + path.string());
    if (::stat(path.c_str(), &now) != 0) io_fail("stat " + path.string());
    if (held.st_ino != now.st_ino || held.st_dev != now.st_dev) continue;

    std::string before = read_all(fd, path);
    std::string after = stamp_image(before, payload);
    if (after == before) return;

    fs::path tmp = path;
    tmp += ".flagtrace-tmp";
    int out = ::open(tmp.c_str(), O_WRONLY | O_CREAT | O_TRUNC | O_CLOEXEC, held.st_mode & 07777);
    if (out < 0) io_fail("create " + tmp.string());
    Closer out_closer{out};
    ::fchmod(out, held.st_mode & 07777);
    std::size_t done = 0;
    while (done < after.size()) {
      ssize_t n = ::write(out, after.data() + done, after.size() - done);
      if (n < 0) {
        if (errno == EINTR) continue;
        ::unlink(tmp.c_str());
        io_fail("write " + tmp.string());
      }
      done += static_cast<std::size_t>(n);
    }
    if (::fsync(out) != 0 || ::rename(tmp.c_str(), path.c_str()) != 0) {
      ::unlink(tmp.c_str());
      io_fail("replace " + path.string());
    }
    return;
  }
}

std::optional<NotePayload> read_stamp(const fs::path& path) { return read_stamp_image(read_path(path)); }

std::vector<std::string> read_comment(const fs::path& path) { return read_comment_image(read_path(path)); }

}  // namespace flagtrace::elf
