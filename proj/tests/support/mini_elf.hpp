#pragma once

// A deliberately small ELF64 reader built on the system <elf.h> structs,
// used to cross-check what the library writes.

#include <cstdint>
#include <string>
#include <vector>

namespace mini_elf {

struct Section {
  std::string name;
  std::uint32_t type = 0;
  std::uint64_t offset = 0;
  std::uint64_t size = 0;
  std::uint64_t addralign = 0;
  std::string bytes;  // empty for SHT_NOBITS
};

struct Note {
  std::string name;  // without the NUL
  std::uint32_t type = 0;
  std::string desc;
  std::size_t encoded_size = 0;
};

// Throws std::runtime_error on anything it does not understand.
std::vector<Section> sections(const std::string& image);
std::vector<Note> notes(const std::string& section_bytes);

}  // namespace mini_elf
