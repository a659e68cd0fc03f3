#pragma once

#include <stdexcept>
#include <string>

namespace adaplan {

// dimension or shape disagreement between arguments
class ShapeError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

// NaN / inf where finite values are required
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// scenario cannot be constructed (e.g. too much traffic for the road)
class CapacityError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// malformed file or header
class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace adaplan
