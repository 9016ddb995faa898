#include <iostream>

#if defined(__GLIBC__)
#include <malloc.h>
#endif

#include "eddi/cli.hpp"

int main(int argc, char** argv) {
#if defined(__GLIBC__)
  // keep large training buffers on the heap instead of a fresh mmap per iteration
  mallopt(M_MMAP_THRESHOLD, 32 << 20);
  mallopt(M_TRIM_THRESHOLD, 256 << 20);
#endif
  std::vector<std::string> args(argv + 1, argv + argc);
  return eddi::run_cli(args, std::cout, std::cerr);
}
