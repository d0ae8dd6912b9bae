#pragma once

// Minimal warning channel. Library code never prints directly; the sink can
// be replaced (tests capture it, the CLI keeps stderr).

#include <functional>
#include <iostream>
#include <string>

namespace hmtl {

using WarningSink = std::function<void(const std::string&)>;

inline WarningSink& warning_sink() {
  static WarningSink sink = [](const std::string& msg) { std::cerr << "warning: " << msg << '\n'; };
  return sink;
}

inline void warn(const std::string& msg) {
  if (warning_sink()) warning_sink()(msg);
}

}  // namespace hmtl
