#pragma once

#include <spdlog/spdlog.h>

namespace mplexnet {

/// Configures the default logger from MPLEXNET_LOG (error, info, debug).
/// Unset or unknown values fall back to "error" so library use stays quiet.
void init_logging();

/// Keeps large freed buffers in the heap between batches instead of
/// unmapping them (glibc only; no-op elsewhere).
void tune_allocator();

}  // namespace mplexnet
