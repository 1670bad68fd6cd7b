#include "gcfsr/log.hpp"

#include <iostream>
#include <mutex>

namespace gcfsr {

namespace {
std::mutex g_mutex;
LogSink g_warning_sink;
bool g_info = true;
}  // namespace

void warn(std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (g_warning_sink) {
    g_warning_sink(message);
    return;
  }
  std::cerr << "warning: " << message << '\n';
}

void info(std::string_view message) {
  std::lock_guard lock(g_mutex);
  if (g_info) std::cerr << message << '\n';
}

LogSink set_warning_sink(LogSink sink) {
  std::lock_guard lock(g_mutex);
  std::swap(sink, g_warning_sink);
  return sink;
}

void set_info_enabled(bool on) {
  std::lock_guard lock(g_mutex);
  g_info = on;
}

}  // namespace gcfsr
