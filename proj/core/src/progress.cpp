#include "prunescope/progress.hpp"

#include <atomic>
#include <charconv>
#include <cstdio>
#include <mutex>

namespace prunescope {
namespace {
std::atomic<bool> g_enabled{false};
std::mutex g_mutex;
}  // namespace

void set_progress_enabled(bool enabled) { g_enabled = enabled; }
bool progress_enabled() { return g_enabled; }

void log_progress(std::initializer_list<ProgressField> fields) {
  if (!g_enabled) return;
  std::string line;
  for (const auto& [key, value] : fields) {
    if (!line.empty()) line += ' ';
    line.append(key);
    line += '=';
    line += value;
  }
  line += '\n';
  std::lock_guard lock(g_mutex);
  std::fputs(line.c_str(), stderr);
  std::fflush(stderr);
}

std::string format_double(double value) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return ec == std::errc() ? std::string(buf, ptr) : std::string("nan");
}

}  // namespace prunescope
