#pragma once

#include <span>
#include <stdexcept>
#include <vector>

#include "hwm/data/dataset.hpp"
#include "hwm/train/surrogate.hpp"

namespace hwm::trust {

/// T odd, or T or T/2 outside the model's ladder.
class InvalidHorizon : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// The probe is structurally undefined for single-horizon checkpoints.
class ProbeRefused : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// The signal does not exist for this kind of state.
class NotApplicable : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Per-cell non-negative map (channel norm already taken), or a single value
/// for vector states.
struct ErrorMap {
  std::vector<double> cells;
  std::size_t height = 1;
  std::size_t width = 1;
  int horizon = 0;

  bool spatial() const noexcept { return height * width > 1; }
};

/// Spatial mean, or the value itself for a scalar map.
double aggregate(const ErrorMap& map);

/// Channel-norm of (a - b) / std per cell: the distance in normalised space.
ErrorMap normalized_distance(const env::State& a, const env::State& b, const data::NormStats& norm, int horizon);

struct ProbeOptions {
  /// Accept T and T/2 outside the ladder (extrapolation studies); T must still be even.
  bool allow_outside_ladder = false;
};

/// |f(s,T) - f(f(s,T/2),T/2)| per cell in normalised space. Three predictor
/// calls for the whole batch.
std::vector<ErrorMap> step_doubling(train::Predictor& model, const data::NormStats& norm,
                                    std::span<const env::State> states, int T, ProbeOptions opts = {});
ErrorMap step_doubling(train::Predictor& model, const data::NormStats& norm, const env::State& s, int T,
                       ProbeOptions opts = {});

/// Throws the probe's refusal or InvalidHorizon if (model, T) is not probeable.
void check_probe(const train::Predictor& model, int T, ProbeOptions opts = {});

}  // namespace hwm::trust
