#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>

namespace sdfl {

/// Base of every error the library throws. `kind()` is a stable identifier
/// suitable for machine-readable error lines.
class Error : public std::runtime_error {
public:
  Error(std::string kind, const std::string& what)
      : std::runtime_error(what), kind_(std::move(kind)) {}

  const std::string& kind() const noexcept { return kind_; }

private:
  std::string kind_;
};

class InvalidParam : public Error {
public:
  InvalidParam(std::string name, std::string constraint)
      : Error("InvalidParam", "invalid parameter '" + name + "': requires " + constraint),
        name_(std::move(name)), constraint_(std::move(constraint)) {}

  const std::string& name() const noexcept { return name_; }
  const std::string& constraint() const noexcept { return constraint_; }

private:
  std::string name_;
  std::string constraint_;
};

class NonPositiveStep : public Error {
public:
  explicit NonPositiveStep(std::size_t index)
      : Error("NonPositiveStep", "tentative stepsize " + std::to_string(index) + " is not positive"),
        index_(index) {}
  std::size_t index() const noexcept { return index_; }

private:
  std::size_t index_;
};

class NonPositiveDelta : public Error {
public:
  NonPositiveDelta() : Error("NonPositiveDelta", "precision parameter delta must be positive") {}
};

class OracleFailure : public Error {
public:
  explicit OracleFailure(const std::string& what) : Error("OracleFailure", what) {}
};

class TruthUnavailable : public Error {
public:
  explicit TruthUnavailable(const std::string& what = "ground truth is not available for this problem")
      : Error("TruthUnavailable", what) {}
};

class UnknownProblem : public Error {
public:
  explicit UnknownProblem(const std::string& name)
      : Error("UnknownProblem", "unknown problem '" + name + "'") {}
};

class MissingLipschitz : public Error {
public:
  MissingLipschitz() : Error("MissingLipschitz", "problem does not declare a gradient Lipschitz constant") {}
};

class ExpansionSafeguard : public Error {
public:
  ExpansionSafeguard(std::size_t coordinate, int doublings)
      : Error("ExpansionSafeguard", "expansion along coordinate " + std::to_string(coordinate) +
                                        " stopped after " + std::to_string(doublings) + " doublings"),
        coordinate_(coordinate), doublings_(doublings) {}

  std::size_t coordinate() const noexcept { return coordinate_; }
  int doublings() const noexcept { return doublings_; }

private:
  std::size_t coordinate_;
  int doublings_;
};

}  // namespace sdfl
