#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace xtime {

/// Error raised by any xtime module. The message is prefixed with the
/// module name ("dataset: ...", "ewt: ...") so CLI diagnostics stay
/// attributable after propagation.
class Error : public std::runtime_error {
 public:
  Error(std::string_view module, const std::string& what)
      : std::runtime_error(std::string(module) + ": " + what), module_(module) {}

  const std::string& module() const noexcept { return module_; }

 private:
  std::string module_;
};

}  // namespace xtime
