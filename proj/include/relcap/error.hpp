#pragma once

#include <stdexcept>
#include <string>

namespace relcap {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Incompatible tensor shapes or layer dimensions.
class ShapeError : public Error {
 public:
  using Error::Error;
};

// Malformed dataset records, vocab problems, bad file contents.
class DataError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class CheckpointError : public Error {
 public:
  using Error::Error;
};

// Numerical failure during training (NaN gradients, divergence guard).
class NumericError : public Error {
 public:
  using Error::Error;
};

}  // namespace relcap
