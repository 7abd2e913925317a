#include "mini_elf.hpp"

#include <elf.h>

#include <cstring>
#include <stdexcept>

namespace mini_elf {

namespace {

template <typename T>
T load(const std::string& image, std::uint64_t off) {
  if (off > image.size() || image.size() - off < sizeof(T)) throw std::runtime_error("read past end");
  T v;
  std::memcpy(&v, image.data() + off, sizeof(T));
  return v;
}

}  // namespace

std::vector<Section> sections(const std::string& image) {
  auto eh = load<Elf64_Ehdr>(image, 0);
  if (std::memcmp(eh.e_ident, ELFMAG, SELFMAG) != 0) throw std::runtime_error("bad magic");
  if (eh.e_ident[EI_CLASS] != ELFCLASS64 || eh.e_ident[EI_DATA] != ELFDATA2LSB) throw std::runtime_error("class");
  if (eh.e_shoff == 0) return {};
  auto first = load<Elf64_Shdr>(image, eh.e_shoff);
  std::uint64_t count = eh.e_shnum ? eh.e_shnum : first.sh_size;
  std::uint64_t strndx = eh.e_shstrndx == SHN_XINDEX ? first.sh_link : eh.e_shstrndx;
  std::vector<Elf64_Shdr> raw;
  for (std::uint64_t i = 0; i < count; ++i) raw.push_back(load<Elf64_Shdr>(image, eh.e_shoff + i * sizeof(Elf64_Shdr)));
  if (strndx >= raw.size()) throw std::runtime_error("bad shstrndx");
  const auto& st = raw[strndx];
  if (st.sh_offset + st.sh_size > image.size()) throw std::runtime_error("strtab out of range");
  std::vector<Section> out;
  for (const auto& s : raw) {
    Section sec;
    if (s.sh_name >= st.sh_size) throw std::runtime_error("name out of range");
    sec.name = std::string(image.c_str() + st.sh_offset + s.sh_name);
    sec.type = s.sh_type;
    sec.offset = s.sh_offset;
    sec.size = s.sh_size;
    sec.addralign = s.sh_addralign;
    if (s.sh_type != SHT_NOBITS) {
      if (s.sh_offset + s.sh_size > image.size()) throw std::runtime_error("section out of range");
      sec.bytes = image.substr(s.sh_offset, s.sh_size);
    }
    out.push_back(std::move(sec));
  }
  return out;
}

std::vector<Note> notes(const std::string& bytes) {
  std::vector<Note> out;
  std::size_t pos = 0;
  auto up4 = [](std::size_t n) { return (n + 3) / 4 * 4; };
  while (pos < bytes.size()) {
    auto nh = load<Elf64_Nhdr>(bytes, pos);
    std::size_t total = sizeof(Elf64_Nhdr) + up4(nh.n_namesz) + up4(nh.n_descsz);
    if (pos + total > bytes.size()) throw std::runtime_error("note overruns section");
    Note n;
    n.name = std::string(bytes.data() + pos + sizeof(Elf64_Nhdr), nh.n_namesz ? nh.n_namesz - 1 : 0);
    n.type = nh.n_type;
    n.desc = bytes.substr(pos + sizeof(Elf64_Nhdr) + up4(nh.n_namesz), nh.n_descsz);
    n.encoded_size = total;
    out.push_back(std::move(n));
    pos += total;
  }
  return out;
}

}  // namespace mini_elf
