#pragma once

#include <stdexcept>
#include <string>

namespace ldesign {

/// Error categories shared across the pipeline. The CLI maps these onto
/// process exit codes.
enum class ErrorKind {
  Config,
  Domain,
  Shape,
  NumericalOverflow,
  ConstraintInfeasible,
  PipelineOrder,
  Degenerate,
  DegenerateReconstruction,
  DegenerateBaseline,
  TrackingFailure,
};

class Error : public std::runtime_error {
 public:
  Error(ErrorKind kind, std::string message)
      : std::runtime_error(std::move(message)), kind_(kind) {}

  ErrorKind kind() const { return kind_; }

  const char* kind_name() const {
    switch (kind_) {
      case ErrorKind::Config: return "config";
      case ErrorKind::Domain: return "domain";
      case ErrorKind::Shape: return "shape";
      case ErrorKind::NumericalOverflow: return "numerical-overflow";
      case ErrorKind::ConstraintInfeasible: return "constraint-infeasible";
      case ErrorKind::PipelineOrder: return "pipeline-order";
      case ErrorKind::Degenerate: return "degenerate";
      case ErrorKind::DegenerateReconstruction: return "degenerate-reconstruction";
      case ErrorKind::DegenerateBaseline: return "degenerate-baseline";
      case ErrorKind::TrackingFailure: return "tracking-failure";
    }
    return "unknown";
  }

 private:
  ErrorKind kind_;
};

}  // namespace ldesign
