#ifndef CDETECT_ERRORS_HPP
#define CDETECT_ERRORS_HPP

#include <stdexcept>
#include <string>

namespace cdetect {

class InvalidInputError : public std::invalid_argument {
 public:
  explicit InvalidInputError(const std::string& what)
      : std::invalid_argument(what) {}
};

class ShapeError : public InvalidInputError {
 public:
  explicit ShapeError(const std::string& what) : InvalidInputError(what) {}
};

// Raised when a matrix that must be (numerically) positive definite has an
// eigenvalue below the admissible floor; carries the offending eigenvalue.
class NotPositiveDefiniteError : public std::runtime_error {
 public:
  NotPositiveDefiniteError(const std::string& what, double eigenvalue)
      : std::runtime_error(what), eigenvalue_(eigenvalue) {}
  double eigenvalue() const noexcept { return eigenvalue_; }

 private:
  double eigenvalue_;
};

// Background covariance too strong for the requested sensing construction.
class BackgroundToleranceError : public std::runtime_error {
 public:
  BackgroundToleranceError(const std::string& what, double lambda_max,
                           double threshold)
      : std::runtime_error(what),
        lambda_max_(lambda_max),
        threshold_(threshold) {}
  double lambda_max() const noexcept { return lambda_max_; }
  double threshold() const noexcept { return threshold_; }

 private:
  double lambda_max_;
  double threshold_;
};

class InfeasibleError : public std::runtime_error {
 public:
  explicit InfeasibleError(const std::string& what)
      : std::runtime_error(what) {}
};

class ConfigError : public std::runtime_error {
 public:
  explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

}  // namespace cdetect

#endif  // CDETECT_ERRORS_HPP
