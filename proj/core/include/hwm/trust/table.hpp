#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "hwm/data/dataset.hpp"
#include "hwm/train/surrogate.hpp"
#include "hwm/trust/baselines.hpp"

namespace hwm::trust {

namespace method {
inline constexpr const char* kStepDoubling = "step_doubling";
inline constexpr const char* kEnsemble = "ensemble";
inline constexpr const char* kTta = "tta";
inline constexpr const char* kGradMag = "grad_mag";
inline constexpr const char* kErrorHead = "error_head";
inline constexpr const char* kConformal = "conformal";
inline constexpr const char* kEnergy = "energy";
inline constexpr const char* kMomentum = "momentum";
inline constexpr const char* kRichardsonFix = "richardson_fix";
inline constexpr const char* kRichardsonProd = "richardson_prod";
}  // namespace method

/// Every method id score_split understands.
const std::vector<std::string>& all_methods();

struct TrustRow {
  std::uint64_t traj_id = 0;
  data::Split split = data::Split::Test;
  int horizon = 0;
  std::string method;
  double score = 0.0;
  double true_rmse = 0.0;
  double cost_seconds = 0.0;
};

void write_trust_csv(const std::filesystem::path& path, const std::vector<TrustRow>& rows);
std::vector<TrustRow> read_trust_csv(const std::filesystem::path& path);

struct ScoringContext {
  train::NeuralSurrogate* model = nullptr;
  /// Extra members for the ensemble score (the model itself is not added).
  std::vector<train::Predictor*> ensemble;
  const ErrorHead* head = nullptr;
  const ConformalScorer* conformal = nullptr;
  TtaOptions tta;
  std::optional<int> richardson_order;
  std::uint64_t seed = 0;
};

/// One row per (trajectory, horizon, method) on the split's fixed evaluation
/// pairs. Methods that do not apply to the state kind or horizon (grad_mag on
/// the ball, physics residuals on fields, step-doubling at odd T) are skipped;
/// a method whose prerequisite is missing (no head, < 2 ensemble members)
/// throws std::invalid_argument. A single-horizon model makes step-doubling throw.
std::vector<TrustRow> score_split(ScoringContext& ctx, const data::SplitData& split, const std::vector<int>& horizons,
                                  const std::vector<std::string>& methods);

}  // namespace hwm::trust
