#pragma once

#include <spdlog/spdlog.h>

namespace corrotdr {

// Reads CORROTDR_LOG (trace|debug|info|warn|error|off); default warn.
void init_logging();

}  // namespace corrotdr
