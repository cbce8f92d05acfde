#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace pixar {

using TokenId = std::uint32_t;

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class InvalidArgument : public Error {
 public:
  using Error::Error;
};

/// An artifact file failed its magic/version/size/checksum checks.
class CorruptArtifact : public Error {
 public:
  using Error::Error;
};

/// Two artifacts were built against different vocabularies.
class IncompatibleArtifacts : public Error {
 public:
  using Error::Error;
};

class TrainingDiverged : public Error {
 public:
  using Error::Error;
};

}  // namespace pixar
