#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace mrens {

// Every failure raised by the library carries a module prefix and a short
// machine-readable code, e.g. "volume_io.BadMagic".
class Error : public std::runtime_error {
public:
  Error(std::string module, std::string code, const std::string& detail)
      : std::runtime_error(module + "." + code + ": " + detail),
        module_(std::move(module)), code_(std::move(code)) {}

  const std::string& module() const noexcept { return module_; }
  const std::string& code() const noexcept { return code_; }
  std::string qualified_code() const { return module_ + "." + code_; }

private:
  std::string module_;
  std::string code_;
};

}  // namespace mrens
