#ifndef TSPLINE_ERROR_HPP
#define TSPLINE_ERROR_HPP

#include <stdexcept>
#include <string>

namespace tspline {

/// Base class of every exception thrown by the library.
class error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Arguments violate a documented precondition (unsorted times, bad parameters).
class invalid_input : public error {
 public:
  using error::error;
};

/// Too few observations for the requested spline order or operation.
class insufficient_data : public invalid_input {
 public:
  using invalid_input::invalid_input;
};

/// Evaluation point outside the support of a knot vector.
class out_of_range : public invalid_input {
 public:
  using invalid_input::invalid_input;
};

/// A factorization or iterative solve broke down.
class numerical_failure : public error {
 public:
  using error::error;
};

/// Every observation was discarded, or the signal carries no usable variance.
class degenerate_fit : public error {
 public:
  using error::error;
};

}  // namespace tspline

#endif  // TSPLINE_ERROR_HPP
