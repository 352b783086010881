#include "relcap/log.hpp"

#include <cstdlib>
#include <string_view>

namespace relcap {

void init_logging_from_env() {
  const char* env = std::getenv("RELCAP_LOG");
  const std::string_view level = env == nullptr ? "info" : env;
  if (level == "error") {
    spdlog::set_level(spdlog::level::err);
  } else if (level == "debug") {
    spdlog::set_level(spdlog::level::debug);
  } else {
    spdlog::set_level(spdlog::level::info);
  }
}

const char* build_describe() { return RELCAP_GIT_DESCRIBE; }

}  // namespace relcap
