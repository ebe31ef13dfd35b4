#pragma once

#include <stdexcept>
#include <string>

namespace bifem {

enum class ErrorCode : int {
  invalid_argument = 1,
  invalid_geometry = 2,
  domain_error = 3,
  point_location = 4,
  mollification_radius = 5,
  gradient_undefined = 6,
  convergence_failure = 7,
  invalid_problem = 8,
  spacelike_violation = 9,
  picard_stall = 10,
  io_error = 11,
  config_error = 12,
  usage_error = 13,
};

const char* to_string(ErrorCode code) noexcept;

// Every failure raised by the library carries one of the codes above so the C
// layer can map it to a status value without parsing messages.
class Error : public std::runtime_error {
 public:
  Error(ErrorCode code, const std::string& message)
      : std::runtime_error(message), code_(code) {}

  ErrorCode code() const noexcept { return code_; }

 private:
  ErrorCode code_;
};

}  // namespace bifem
