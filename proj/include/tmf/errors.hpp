#ifndef TMF_ERRORS_HPP
#define TMF_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace tmf {

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// A state, gradient or particle stopped being finite.
class NumericalDivergence : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

inline void require_shape(bool ok, const char* what) {
  if (!ok) throw DimensionError(std::string("dimension mismatch: ") + what);
}

}  // namespace tmf

#endif  // TMF_ERRORS_HPP
