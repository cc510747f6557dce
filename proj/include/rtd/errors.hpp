#pragma once

#include <stdexcept>
#include <string>

namespace rtd {

// Failure carrying a module-qualified code such as "volume.QuadratureFailure".
class Error : public std::runtime_error {
 public:
  Error(std::string module, std::string kind, const std::string& detail)
      : std::runtime_error(module + "." + kind + ": " + detail),
        module_(std::move(module)),
        kind_(std::move(kind)) {}

  const std::string& module() const { return module_; }
  const std::string& kind() const { return kind_; }
  std::string code() const { return module_ + "." + kind_; }

 private:
  std::string module_;
  std::string kind_;
};

}  // namespace rtd
