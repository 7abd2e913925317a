#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <elf.h>
#include <sys/stat.h>

#include <cstring>

#include "fixtures.hpp"
#include "generators.hpp"
#include "mini_elf.hpp"

#include "flagtrace/elfnote.hpp"

using namespace flagtrace;
using namespace flagtrace::elf;

namespace {

flags::EffectiveFlagSet sample_effective() {
  auto argv = gen::as_tokens({"gcc", "-O2", "-fstack-protector-strong", "-DNDEBUG", "-Iinc"});
  return flags::resolve(flags::classify_arguments(argv, {}));
}

NotePayload sample(const std::string& build = "b1") { return make_payload(build, "src/a.c", sample_effective()); }

std::string object_image() { return fixtures::slurp(fixtures::fixture_object()); }

ElfError::Kind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const ElfError& e) {
    return e.kind();
  }
  FAIL("expected an ElfError");
  return ElfError::Kind::Io;
}

// ELF64 header with no sections at all.
std::string bare_header() {
  Elf64_Ehdr h{};
  std::memcpy(h.e_ident, ELFMAG, SELFMAG);
  h.e_ident[EI_CLASS] = ELFCLASS64;
  h.e_ident[EI_DATA] = ELFDATA2LSB;
  h.e_ident[EI_VERSION] = EV_CURRENT;
  h.e_type = ET_REL;
  h.e_machine = EM_X86_64;
  h.e_version = EV_CURRENT;
  h.e_ehsize = sizeof(Elf64_Ehdr);
  h.e_shentsize = sizeof(Elf64_Shdr);
  return std::string(reinterpret_cast<const char*>(&h), sizeof h);
}

const mini_elf::Section* find(const std::vector<mini_elf::Section>& secs, const std::string& name) {
  for (const auto& s : secs) {
    if (s.name == name) return &s;
  }
  return nullptr;
}

}  // namespace

TEST_CASE("note records are padded to four bytes") {
  for (std::size_t n = 0; n < 100; ++n) {
    std::string desc(n, 'x');
    auto rec = encode_note(kNoteName, kNoteType, desc);
    CHECK(rec.size() == 12 + pad4(kNoteName.size() + 1) + pad4(n));
    auto parsed = mini_elf::notes(rec);
    REQUIRE(parsed.size() == 1);
    CHECK(parsed[0].name == kNoteName);
    CHECK(parsed[0].type == kNoteType);
    CHECK(parsed[0].desc == desc);
    CHECK(parsed[0].encoded_size == rec.size());
  }
  CHECK(pad4(0) == 0);
  CHECK(pad4(1) == 4);
  CHECK(pad4(4) == 4);
  CHECK(pad4(5) == 8);
}

TEST_CASE("payload encoding round-trips") {
  auto p = sample();
  CHECK(decode_payload(encode_payload(p)) == p);
  REQUIRE(p.flags_text);
  CHECK(p.effective_digest.size() == 64);
  NotePayload odd{1, "id\twith\nbreaks", "a b\\c", std::string(64, 'a'), std::nullopt};
  CHECK(decode_payload(encode_payload(odd)) == odd);
  CHECK(kind_of([] { decode_payload("nonsense"); }) == ElfError::Kind::MalformedNote);
  auto tampered = p;
  tampered.effective_digest = std::string(64, '0');
  CHECK(kind_of([&] { decode_payload(encode_payload(tampered)); }) == ElfError::Kind::MalformedNote);
}

TEST_CASE("oversized flag text is elided") {
  std::vector<std::string> argv = {"gcc"};
  for (int i = 0; i < 5000; ++i) argv.push_back("-DMACRO_NUMBER_" + std::to_string(i) + "=some_long_value");
  auto set = flags::resolve(flags::classify_arguments(gen::as_tokens(argv), {}));
  auto p = make_payload("b", "s", set);
  CHECK_FALSE(p.flags_text);
  CHECK(encode_payload(p).size() <= kMaxPayload);
  CHECK(p.effective_digest.size() == 64);
}

TEST_CASE("stamping a compiled object keeps every existing section") {
  auto before = object_image();
  auto p = sample();
  auto after = stamp_image(before, p);
  REQUIRE(read_stamp_image(after) == p);

  auto old_secs = mini_elf::sections(before);
  auto new_secs = mini_elf::sections(after);
  REQUIRE(new_secs.size() == old_secs.size() + 1);
  for (std::size_t i = 0; i < old_secs.size(); ++i) {
    CAPTURE(old_secs[i].name);
    CHECK(new_secs[i].name == old_secs[i].name);
    CHECK(new_secs[i].type == old_secs[i].type);
    if (old_secs[i].name == ".shstrtab") {
      CHECK(new_secs[i].bytes.starts_with(old_secs[i].bytes));
    } else {
      CHECK(new_secs[i].bytes == old_secs[i].bytes);
      CHECK(new_secs[i].offset == old_secs[i].offset);
    }
  }
  const auto& note = new_secs.back();
  CHECK(note.name == kSectionName);
  CHECK(note.type == SHT_NOTE);
  CHECK(note.offset % 4 == 0);
  auto recs = mini_elf::notes(note.bytes);
  REQUIRE(recs.size() == 1);
  CHECK(recs[0].name == kNoteName);
  CHECK(recs[0].type == kNoteType);
  CHECK(decode_payload(recs[0].desc) == p);
}

TEST_CASE("restamping is idempotent and replaces the note") {
  auto image = object_image();
  auto once = stamp_image(image, sample("b1"));
  CHECK(stamp_image(once, sample("b1")) == once);
  auto other = stamp_image(once, sample("b2"));
  CHECK(read_stamp_image(other)->build_id == "b2");
  CHECK(mini_elf::sections(other).size() == mini_elf::sections(once).size());
  CHECK(stamp_image(other, sample("b1")) == once);
}

TEST_CASE("unstamped files have no stamp") {
  CHECK_FALSE(read_stamp_image(object_image()));
}

TEST_CASE("a file without sections can be stamped") {
  auto image = bare_header();
  auto out = stamp_image(image, sample());
  CHECK(read_stamp_image(out) == sample());
  auto secs = mini_elf::sections(out);
  REQUIRE(find(secs, std::string(kSectionName)));
  CHECK(find(secs, ".shstrtab"));
}

TEST_CASE("rejects what it cannot handle") {
  CHECK(kind_of([] { stamp_image("hello world", sample()); }) == ElfError::Kind::NotElf);
  CHECK(kind_of([] { read_stamp_image(""); }) == ElfError::Kind::NotElf);
  auto elf32 = object_image();
  elf32[EI_CLASS] = ELFCLASS32;
  CHECK(kind_of([&] { stamp_image(elf32, sample()); }) == ElfError::Kind::UnsupportedClass);
  auto truncated = object_image().substr(0, 80);
  CHECK(kind_of([&] { read_stamp_image(truncated); }) == ElfError::Kind::MalformedElf);
}

TEST_CASE("a note overrunning its section reports the header offset") {
  auto stamped = stamp_image(object_image(), sample());
  const auto* sec = find(mini_elf::sections(stamped), std::string(kSectionName));
  REQUIRE(sec);
  // descsz is the second word of the note header.
  std::uint32_t huge = 0x7fffffff;
  std::memcpy(stamped.data() + sec->offset + 4, &huge, 4);
  try {
    read_stamp_image(stamped);
    FAIL("expected MalformedNote");
  } catch (const ElfError& e) {
    CHECK(e.kind() == ElfError::Kind::MalformedNote);
    CHECK(e.offset() == sec->offset);
  }
}

TEST_CASE("reads the compiler identification comment") {
  auto comments = read_comment_image(object_image());
  CHECK(comments.size() >= 1);
  for (const auto& c : comments) CHECK_FALSE(c.empty());
  CHECK(read_comment_image(bare_header()).empty());
}

TEST_CASE("stamping a file on disk") {
  fixtures::TempDir dir("elf");
  auto path = dir / "obj.o";
  fixtures::write_file(path, object_image());
  ::chmod(path.c_str(), 0640);
  stamp(path, sample());
  CHECK(read_stamp(path) == sample());
  struct stat st {};
  REQUIRE(::stat(path.c_str(), &st) == 0);
  CHECK((st.st_mode & 0777) == 0640);
  auto first = fixtures::slurp(path);
  auto ino = st.st_ino;
  stamp(path, sample());
  CHECK(fixtures::slurp(path) == first);
  REQUIRE(::stat(path.c_str(), &st) == 0);
  CHECK(st.st_ino == ino);  // unchanged stamp leaves the file alone
  CHECK_FALSE(read_comment(path).empty());

  fixtures::write_file(dir / "text", "not elf");
  CHECK(kind_of([&] { stamp(dir / "text", sample()); }) == ElfError::Kind::NotElf);
  CHECK(fixtures::slurp(dir / "text") == "not elf");
  CHECK(kind_of([&] { read_stamp(dir / "missing"); }) == ElfError::Kind::Io);
}
