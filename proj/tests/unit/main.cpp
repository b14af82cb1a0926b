#define DOCTEST_CONFIG_IMPLEMENT
#include <doctest.h>

#include <spdlog/spdlog.h>

#include "transcoder/util/allocator.hpp"

int main(int argc, char** argv) {
  transcoder::util::configure_allocator();
  spdlog::set_level(spdlog::level::err);
  doctest::Context context(argc, argv);
  return context.run();
}
