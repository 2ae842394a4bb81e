#pragma once

#include <stdexcept>
#include <string>

namespace powerspec {

// Base for every failure raised by the library. The CLI maps these to exit status 2.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DomainError : public Error {
 public:
  using Error::Error;
};

class ConvergenceError : public Error {
 public:
  using Error::Error;
};

// A return-time search exceeded MapParams::r_cap.
class CapError : public Error {
 public:
  using Error::Error;
};

// Frequency too close to 0 or 2*pi for the requested estimator.
class GuardBandError : public Error {
 public:
  using Error::Error;
};

class SizeError : public Error {
 public:
  using Error::Error;
};

// Parameter regime not covered by the operation (e.g. blow-up scan with gamma < 1/2).
class RegimeError : public Error {
 public:
  using Error::Error;
};

// Too few samples in the region a statistic is computed from.
class InsufficientDataError : public Error {
 public:
  using Error::Error;
};

// Malformed or out-of-range configuration; the message carries the line number.
class ConfigError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

}  // namespace powerspec
