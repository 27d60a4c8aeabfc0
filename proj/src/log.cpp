#include "mplexnet/log.hpp"

#include <cstdlib>
#include <string_view>

#ifdef __GLIBC__
#include <malloc.h>
#endif

namespace mplexnet {

void init_logging() {
  const char* env = std::getenv("MPLEXNET_LOG");
  const std::string_view level = env ? env : "error";
  if (level == "debug")
    spdlog::set_level(spdlog::level::debug);
  else if (level == "info")
    spdlog::set_level(spdlog::level::info);
  else
    spdlog::set_level(spdlog::level::err);
  spdlog::set_pattern("[%l] %v");
}

void tune_allocator() {
#ifdef __GLIBC__
  mallopt(M_MMAP_THRESHOLD, 1 << 30);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
#endif
}

}  // namespace mplexnet
