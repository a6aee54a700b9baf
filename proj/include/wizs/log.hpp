#pragma once

#include <spdlog/spdlog.h>

#include <memory>

namespace wizs {

// Library-wide logger "wizs", writing to stderr. Created on first use.
std::shared_ptr<spdlog::logger> logger();

}  // namespace wizs
