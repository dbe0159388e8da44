#pragma once

#include <stdexcept>
#include <string>

namespace mabsa {

// Exception tagged with a per-module error category. Each module defines an
// `enum class` of categories plus a `to_string` overload for it.
template <typename Kind>
class CategorizedError : public std::runtime_error {
 public:
  CategorizedError(Kind kind, const std::string& detail)
      : std::runtime_error(std::string(to_string(kind)) + ": " + detail), kind_(kind) {}

  Kind kind() const noexcept { return kind_; }

 private:
  Kind kind_;
};

}  // namespace mabsa
