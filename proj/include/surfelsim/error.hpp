#ifndef SURFELSIM_ERROR_HPP
#define SURFELSIM_ERROR_HPP

#include <stdexcept>
#include <string>

namespace surfelsim {

/// Broad error category. Maps onto CLI exit codes (validation → 1, runtime → 2).
enum class ErrorKind {
  kFormat,      // unreadable or malformed on-disk data
  kValidation,  // data violates a type invariant
  kConfig,      // invalid configuration
  kNotFound,    // requested entity does not exist
  kEmptyModel,  // object has no points to reconstruct from
  kNoValidPose, // perturbation exhausted its attempts
  kDimension,   // image/tensor size mismatch
};

inline const char* to_string(ErrorKind kind) {
  switch (kind) {
    case ErrorKind::kFormat: return "format error";
    case ErrorKind::kValidation: return "validation error";
    case ErrorKind::kConfig: return "configuration error";
    case ErrorKind::kNotFound: return "not found";
    case ErrorKind::kEmptyModel: return "empty model";
    case ErrorKind::kNoValidPose: return "no valid pose";
    case ErrorKind::kDimension: return "dimension mismatch";
  }
  return "error";
}

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, const std::string& message)
      : std::runtime_error(std::string(to_string(kind)) + ": " + message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

 private:
  ErrorKind kind_;
};

}  // namespace surfelsim

#endif  // SURFELSIM_ERROR_HPP
