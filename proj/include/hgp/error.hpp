#pragma once

#include <stdexcept>
#include <string>

namespace hgp {

// Every rejection raised by the library. `what()` carries the human message,
// `field()` names the offending input (edge, attribute, checkpoint block, ...)
// when there is one.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& message, std::string field = {})
      : std::runtime_error(message), field_(std::move(field)) {}

  const std::string& field() const noexcept { return field_; }

 private:
  std::string field_;
};

inline void require(bool ok, const std::string& message, const std::string& field = {}) {
  if (!ok) throw Error(message, field);
}

inline void require(bool ok, const char* message, const std::string& field = {}) {
  if (!ok) throw Error(message, field);
}

}  // namespace hgp
