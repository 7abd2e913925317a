#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "flagtrace/error.hpp"
#include "flagtrace/flagmodel.hpp"

namespace flagtrace::elf {

inline constexpr std::string_view kNoteName = "FLAGTRACE";
inline constexpr std::uint32_t kNoteType = 0x464c4754;  // "FLGT" read as a little-endian word
inline constexpr std::string_view kSectionName = ".note.flagtrace";
inline constexpr std::size_t kMaxPayload = 64 * 1024;

class ElfError : public Error {
 public:
  enum class Kind { NotElf, UnsupportedClass, MalformedElf, MalformedNote, Io };

  ElfError(Kind kind, std::string message, std::uint64_t offset = 0)
      : Error(std::move(message)), kind_(kind), offset_(offset) {}

  Kind kind() const { return kind_; }
  // File offset of the bad note header for MalformedNote.
  std::uint64_t offset() const { return offset_; }

 private:
  Kind kind_;
  std::uint64_t offset_;
};

struct NotePayload {
  int version = 1;
  std::string build_id;
  std::string subject;           // TU id or target output
  std::string effective_digest;  // sha256 of canonical_serialize(effective)
  std::optional<std::string> flags_text;

  friend bool operator==(const NotePayload&, const NotePayload&) = default;
};

// Builds a payload for an effective set. flags_text is dropped when the
// encoded payload would exceed kMaxPayload.
NotePayload make_payload(std::string build_id, std::string subject, const flags::EffectiveFlagSet& effective);

// Text encoding:
//   flagtrace-note\t1
//   build\t<id>
//   subject\t<path>
//   digest\t<hex>
//   flags\t<escaped canonical serialization>   (optional)
// Fields use the store's escaping.
std::string encode_payload(const NotePayload& p);
NotePayload decode_payload(std::string_view bytes);  // throws ElfError(MalformedNote)

constexpr std::size_t pad4(std::size_t n) { return (n + 3) & ~std::size_t{3}; }

// One ELF note record: namesz, descsz, type, then name and desc, each
// zero-padded to 4 bytes. The name carries its terminating NUL.
std::string encode_note(std::string_view name, std::uint32_t type, std::string_view desc);

// Pure form of stamp(): returns the stamped image.
std::string stamp_image(std::string_view image, const NotePayload& payload);
std::optional<NotePayload> read_stamp_image(std::string_view image);
std::vector<std::string> read_comment_image(std::string_view image);

// Appends (or replaces) the .note.flagtrace section. Takes an exclusive
// flock on the file and replaces it atomically, keeping its mode. A stamp
// equal to the current one leaves the file untouched.
void stamp(const std::filesystem::path& path, const NotePayload& payload);
std::optional<NotePayload> read_stamp(const std::filesystem::path& path);
std::vector<std::string> read_comment(const std::filesystem::path& path);

}  // namespace flagtrace::elf
