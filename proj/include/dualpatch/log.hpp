#pragma once

#include <functional>
#include <string>

namespace dualpatch {

enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

using LogSink = std::function<void(LogLevel, const std::string&)>;

// Process-wide sink; the default discards everything.
void set_log_sink(LogSink sink);
void log(LogLevel level, const std::string& message);

}  // namespace dualpatch
