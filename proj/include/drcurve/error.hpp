#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace drcurve {

enum class ErrorKind {
  // data / input errors
  LengthMismatch,
  InvalidData,
  ShapeMismatch,
  GridCoverage,
  ExposureOutOfRange,
  DimensionTooSmall,
  OutOfSupport,
  KOutOfRange,
  AlphaOutOfRange,
  MixedConfiguration,
  InvalidConfig,
  // numerical failures
  SingularWindow,
  PropensityTooSmall,
  Separation,
  RankDeficientDesign,
  NonConvergence,
  NotFactorizable,
  HatDiagonalOne,
  NoFeasibleBandwidth,
  ZeroBias,
  ReplicationFailure,
};

std::string_view to_string(ErrorKind kind);

//! Coarse classification used by the command-line tool for exit codes.
enum class ErrorClass { Config, Data, Numerical };

ErrorClass classify(ErrorKind kind);

class Error : public std::runtime_error {
public:
  Error(ErrorKind kind, const std::string& message)
    : std::runtime_error(message), kind_(kind) {}

  ErrorKind kind() const noexcept { return kind_; }

private:
  ErrorKind kind_;
};

} // namespace drcurve
