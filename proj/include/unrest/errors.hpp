#pragma once

#include <stdexcept>
#include <string>

namespace unrest {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

/// File contents do not match the declared format (bad magic, header/size mismatch, pixel type).
class FormatError : public Error {
 public:
  using Error::Error;
};

class ShapeError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

class SolverError : public Error {
 public:
  using Error::Error;
};

class BackboneError : public Error {
 public:
  using Error::Error;
};

class ChecksumError : public Error {
 public:
  using Error::Error;
};

class VersionError : public Error {
 public:
  using Error::Error;
};

class FingerprintError : public Error {
 public:
  using Error::Error;
};

/// AUROC requested on a sample set containing a single class.
class UndefinedAurocError : public Error {
 public:
  using Error::Error;
};

}  // namespace unrest
