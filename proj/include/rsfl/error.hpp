#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace rsfl {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UnknownSystem : public Error {
 public:
  explicit UnknownSystem(const std::string& name) : Error("unknown system: " + name) {}
};

class InvalidParameter : public Error {
 public:
  using Error::Error;
};

/// Raised when an orbit leaves a Euclidean trapping box.
class EscapeError : public Error {
 public:
  EscapeError(double time, const std::string& what) : Error(what), time_(time) {}
  double time() const noexcept { return time_; }

 private:
  double time_;
};

class SingularCenter : public Error {
 public:
  using Error::Error;
};

class InsufficientHorizon : public Error {
 public:
  using Error::Error;
};

class NonMonotoneAnchors : public Error {
 public:
  using Error::Error;
};

class EstimationError : public Error {
 public:
  using Error::Error;
};

/// Every epsilon was fully censored; carries whatever subset was still usable.
class CensoredError : public Error {
 public:
  CensoredError(const std::string& what, std::vector<double> usable)
      : Error(what), usable_(std::move(usable)) {}
  const std::vector<double>& usable_epsilons() const noexcept { return usable_; }

 private:
  std::vector<double> usable_;
};

class FormatError : public Error {
 public:
  using Error::Error;
};

}  // namespace rsfl
