#include "wizs/log.hpp"

#include <spdlog/sinks/stdout_color_sinks.h>

#include <mutex>

namespace wizs {

std::shared_ptr<spdlog::logger> logger() {
  static std::once_flag once;
  static std::shared_ptr<spdlog::logger> log;
  std::call_once(once, [] {
    log = spdlog::get("wizs");
    if (!log) {
      log = spdlog::stderr_color_mt("wizs");
      log->set_pattern("%Y-%m-%dT%H:%M:%S.%e %^%l%$ %v");
    }
  });
  return log;
}

}  // namespace wizs
