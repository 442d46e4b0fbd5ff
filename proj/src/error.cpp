#include "drcurve/error.hpp"

namespace drcurve {

std::string_view to_string(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::LengthMismatch: return "LengthMismatch";
    case ErrorKind::InvalidData: return "InvalidData";
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::GridCoverage: return "GridCoverage";
    case ErrorKind::ExposureOutOfRange: return "ExposureOutOfRange";
    case ErrorKind::DimensionTooSmall: return "DimensionTooSmall";
    case ErrorKind::OutOfSupport: return "OutOfSupport";
    case ErrorKind::KOutOfRange: return "KOutOfRange";
    case ErrorKind::AlphaOutOfRange: return "AlphaOutOfRange";
    case ErrorKind::MixedConfiguration: return "MixedConfiguration";
    case ErrorKind::InvalidConfig: return "InvalidConfig";
    case ErrorKind::SingularWindow: return "SingularWindow";
    case ErrorKind::PropensityTooSmall: return "PropensityTooSmall";
    case ErrorKind::Separation: return "Separation";
    case ErrorKind::RankDeficientDesign: return "RankDeficientDesign";
    case ErrorKind::NonConvergence: return "NonConvergence";
    case ErrorKind::NotFactorizable: return "NotFactorizable";
    case ErrorKind::HatDiagonalOne: return "HatDiagonalOne";
    case ErrorKind::NoFeasibleBandwidth: return "NoFeasibleBandwidth";
    case ErrorKind::ZeroBias: return "ZeroBias";
    case ErrorKind::ReplicationFailure: return "ReplicationFailure";
  }
  return "Unknown";
}

ErrorClass classify(ErrorKind kind)
{
  switch (kind) {
    case ErrorKind::InvalidConfig:
    case ErrorKind::AlphaOutOfRange:
    case ErrorKind::KOutOfRange:
    case ErrorKind::MixedConfiguration:
      return ErrorClass::Config;
    case ErrorKind::LengthMismatch:
    case ErrorKind::InvalidData:
    case ErrorKind::ShapeMismatch:
    case ErrorKind::GridCoverage:
    case ErrorKind::ExposureOutOfRange:
    case ErrorKind::DimensionTooSmall:
    case ErrorKind::OutOfSupport:
      return ErrorClass::Data;
    default:
      return ErrorClass::Numerical;
  }
}

} // namespace drcurve
