#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include "sslseg/parallel.hpp"

int main(int argc, char** argv) {
  sslseg::tune_allocator();
  doctest::Context context(argc, argv);
  return context.run();
}
