#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwm/data/split.hpp"
#include "hwm/train/trainer.hpp"
#include "hwm/trust/baselines.hpp"
#include "hwm/trust/table.hpp"

namespace hwm::cli {

/// Exit codes shared by every subcommand.
enum Exit : int { kOk = 0, kConfigError = 2, kMissingPrereq = 3, kRuntimeFailure = 4, kValidationFailure = 5 };

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// An input artifact is absent; the message names the command that makes it.
class MissingPrerequisite : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Profile { Desk, Paper };
std::string to_string(Profile p);
Profile profile_from_string(const std::string& name);

enum class TrainMode { Supervised, SelfConsistency, SingleHorizon };
std::string to_string(TrainMode m);

struct TrustSection {
  std::vector<std::string> methods;
  /// Empty means every even ladder horizon.
  std::vector<int> horizons;
  trust::TtaOptions tta;
  std::size_t conformal_k = 10;
  trust::ErrorHead::Options head;
  std::optional<int> richardson_order;
};

struct DeploySection {
  std::vector<double> q{0.5, 0.6, 0.75, 0.85, 0.9};
  double q_main = 0.75;
  int horizon = 8;
  std::string method = "step_doubling";
  int resamples = 1000;
};

struct EvalSection {
  double percentile = 75.0;
  int resamples = 1000;
  double level = 0.95;
  int closed_loop_horizon = 8;
  std::vector<int> closed_loop_k{1, 2, 4, 8};
  bool beyond_tmax = true;
};

struct BenchSection {
  int repeats = 5;
  int warmup = 1;
  std::vector<int> horizons{2, 8, 64};
  std::size_t states = 1;
};

struct RenderSection {
  int horizon = 8;
  std::size_t count = 1;
  data::Split split = data::Split::Test;
};

struct RunConfig {
  Profile profile = Profile::Desk;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  std::size_t grid = 1;
  data::EnvDataConfig data;
  train::TrainConfig train;
  TrainMode train_mode = TrainMode::Supervised;
  int single_horizon = 8;
  /// Independently seeded models, the main one included.
  int ensemble = 3;
  TrustSection trust;
  DeploySection deploy;
  EvalSection eval;
  BenchSection bench;
  RenderSection render;
  std::vector<double> ablate_lambdas{0.0, 0.1, 1.0};

  std::vector<int> trust_horizons() const;
};

/// Overrides applied after the file: flag or environment values.
struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  std::optional<Profile> profile;
};

/// Defaults of a profile for one environment.
RunConfig profile_defaults(Profile p, env::EnvId env);

/// Parses a config document over the profile defaults. Unknown keys, wrong
/// types and invalid values throw ConfigError.
RunConfig parse_config(const std::string& json_text, const Overrides& ov = {});
RunConfig load_config(const std::string& path, const Overrides& ov = {});

/// Fully resolved document; parse_config(to_json(c)) reproduces c.
std::string to_json(const RunConfig& c);

/// Trainer settings after applying the mode, ladder and seed.
train::TrainConfig effective_train(const RunConfig& c);

/// Throws ConfigError.
void validate(const RunConfig& c);

}  // namespace hwm::cli
