#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace etcons {

/// Base class for domain failures. Precondition and dimension violations
/// throw std::invalid_argument instead.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// A hypothesis of the consensus guarantees does not hold (no spanning tree,
/// uncontrollable pair, non-Hurwitz closed loop, no stabilizing solution).
class InfeasibleError : public Error {
 public:
  InfeasibleError(std::string hypothesis, const std::string& what)
      : Error(what), hypothesis_(std::move(hypothesis)) {}

  const std::string& hypothesis() const { return hypothesis_; }

 private:
  std::string hypothesis_;
};

/// A guarantee constant is degenerate (e.g. K3 <= 0).
class BoundDegeneracy : public Error {
 public:
  using Error::Error;
};

class ParseError : public Error {
 public:
  using Error::Error;
};

/// Numeric overflow or Zeno guard trip during a run.
class SimulationError : public Error {
 public:
  SimulationError(double time, const std::string& what)
      : Error(what), time_(time) {}

  double time() const { return time_; }

 private:
  double time_;
};

}  // namespace etcons
