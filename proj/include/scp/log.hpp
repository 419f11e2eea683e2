#pragma once

#include <functional>
#include <string>

namespace scp::log {

using Sink = std::function<void(const std::string&)>;

void warn(const std::string& message);
void info(const std::string& message);

// Replaces the warning sink (stderr by default); returns the previous one.
Sink set_warning_sink(Sink sink);
void set_quiet(bool quiet);

}  // namespace scp::log
