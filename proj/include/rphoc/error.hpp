#pragma once

#include <stdexcept>
#include <string>

namespace rphoc {

// Base class for every failure raised by the library. Callers that only care
// about "did it work" catch this; the CLI maps subclasses onto exit codes.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Bad caller input: empty images, malformed files, out-of-range parameters.
class InvalidInput : public Error {
 public:
  using Error::Error;
};

class InvalidShape : public Error {
 public:
  using Error::Error;
};

// A region that cannot be mapped onto a feature map. `index` is the position
// of the offending ROI in the request, or -1 when not applicable.
class InvalidRoi : public Error {
 public:
  InvalidRoi(const std::string& what, int index = -1) : Error(what), index_(index) {}
  int index() const { return index_; }

 private:
  int index_;
};

class DegenerateTraining : public Error {
 public:
  using Error::Error;
};

// PHOC configuration hash of a model or store differs from the one requested.
class Incompatible : public Error {
 public:
  using Error::Error;
};

class Divergence : public Error {
 public:
  Divergence(const std::string& what, long iteration, double lr)
      : Error(what), iteration_(iteration), lr_(lr) {}
  long iteration() const { return iteration_; }
  double lr() const { return lr_; }

 private:
  long iteration_;
  double lr_;
};

class UndefinedDistance : public Error {
 public:
  using Error::Error;
};

}  // namespace rphoc
