#include <malloc.h>

#include <iostream>

#include "cvnn/cli.hpp"

int main(int argc, char** argv) {
  // keep large tensor buffers on the heap instead of fresh mmap pages per op
  mallopt(M_MMAP_THRESHOLD, 256 << 20);
  mallopt(M_TRIM_THRESHOLD, 512 << 20);
  return cvnn::run_cli(argc, argv, std::cout, std::cerr);
}
