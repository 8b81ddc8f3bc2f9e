#pragma once

#include <stdexcept>
#include <string>

namespace structsum {

// Base of every error the library raises. Subclasses name the failure mode.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

class SingularMatrix : public Error {
 public:
  using Error::Error;
};

// Raised by the tree layer when the Laplacian cannot be inverted.
class SingularLaplacian : public SingularMatrix {
 public:
  using SingularMatrix::SingularMatrix;
};

class IdOutOfRange : public Error {
 public:
  using Error::Error;
};

class OddHiddenSize : public Error {
 public:
  using Error::Error;
};

class TooLarge : public Error {
 public:
  using Error::Error;
};

class AllMasked : public Error {
 public:
  using Error::Error;
};

class EmptyAnswer : public Error {
 public:
  using Error::Error;
};

class EmptyCorpus : public Error {
 public:
  using Error::Error;
};

class NoAnswers : public Error {
 public:
  using Error::Error;
};

// Malformed input data (dataset lines, vocab files, checkpoints).
class DataError : public Error {
 public:
  using Error::Error;
};

}  // namespace structsum
