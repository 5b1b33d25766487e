#pragma once

#include <stdexcept>
#include <string>

namespace acaptcha {

// Base of every error the library throws.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Input violates a documented precondition (shape mismatch, bad parameter).
class InvalidInput : public Error {
 public:
  using Error::Error;
};

// Malformed or truncated file.
class FormatError : public Error {
 public:
  using Error::Error;
};

// Loss became non-finite during training.
class TrainingError : public Error {
 public:
  using Error::Error;
};

// Operation not defined for this model kind (e.g. gradients of KNN).
class UnsupportedModel : public Error {
 public:
  using Error::Error;
};

// A generator cannot make progress (e.g. frequency mask with no free coefficient).
class AttackError : public Error {
 public:
  using Error::Error;
};

}  // namespace acaptcha
