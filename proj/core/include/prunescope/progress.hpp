#pragma once

#include <initializer_list>
#include <string>
#include <string_view>
#include <utility>

namespace prunescope {

/// Line-oriented progress logging on stderr: `key=value` pairs separated by
/// spaces, one event per line. Disabled by default for library use.
void set_progress_enabled(bool enabled);
bool progress_enabled();

using ProgressField = std::pair<std::string_view, std::string>;
void log_progress(std::initializer_list<ProgressField> fields);

std::string format_double(double value);

}  // namespace prunescope
