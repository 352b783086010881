#pragma once

#include <spdlog/spdlog.h>

namespace relcap {

// Sets the global spdlog level from RELCAP_LOG (error | info | debug).
// Unset or unrecognized values leave the level at info.
void init_logging_from_env();

// `git describe` of the source tree at build time.
const char* build_describe();

}  // namespace relcap
