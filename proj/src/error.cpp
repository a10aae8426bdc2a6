#include "corrotdr/error.hpp"
#include "corrotdr/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <cstdlib>

namespace corrotdr {

const char* to_string(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidArgument: return "invalid-argument";
    case ErrorCode::InvalidPolynomial: return "invalid-polynomial";
    case ErrorCode::FitDegenerate: return "fit-degenerate";
    case ErrorCode::InsufficientPeaks: return "insufficient-peaks";
    case ErrorCode::RankDeficient: return "rank-deficient";
    case ErrorCode::DegenerateDrift: return "degenerate-drift";
    case ErrorCode::Config: return "config";
    case ErrorCode::Io: return "io";
    }
    return "unknown";
}

void init_logging()
{
    // Logs go to stderr so stdout stays machine-readable.
    if (!spdlog::get("corrotdr")) {
        spdlog::set_default_logger(spdlog::stderr_color_mt("corrotdr"));
    }
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("CORROTDR_LOG")) {
        spdlog::set_level(spdlog::level::from_str(env));
    }
}

}  // namespace corrotdr
