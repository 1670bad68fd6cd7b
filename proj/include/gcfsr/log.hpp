#pragma once

#include <functional>
#include <string_view>

namespace gcfsr {

// Warnings go to stderr unless a sink is installed (tests capture them).
void warn(std::string_view message);
void info(std::string_view message);

using LogSink = std::function<void(std::string_view)>;
// Returns the previous sink; pass an empty function to restore stderr.
LogSink set_warning_sink(LogSink sink);
void set_info_enabled(bool on);

}  // namespace gcfsr
