// Compiled only to obtain a real ELF64 relocatable object for the stamping
// tests. Do not link.
#include <cstdio>

namespace {
const char kBanner[] = "flagtrace fixture";
int counter = 0;
}  // namespace

int fixture_entry(int x) {
  counter += x;
  std::printf("%s %d\n", kBanner, counter);
  return counter * 3;
}
