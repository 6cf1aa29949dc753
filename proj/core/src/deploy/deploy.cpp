#include "hwm/deploy/deploy.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "hwm/train/trainer.hpp"
#include "hwm/util/csv.hpp"
#include "hwm/util/rng.hpp"

namespace hwm::deploy {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

void check_q(double q) {
  if (!(q >= 0.0 && q <= 1.0)) throw std::invalid_argument("keep fraction q must lie in [0, 1]");
}

void finish(DeploymentResult& r) {
  double m1 = 0.0, m2 = 0.0;
  std::size_t n = 0;
  for (const auto& row : r.rows) {
    if (!row.rmse_mode2) continue;
    m1 += row.rmse_mode1;
    m2 += *row.rmse_mode2;
    ++n;
  }
  r.rmse_mode1 = n > 0 ? m1 / static_cast<double>(n) : 0.0;
  r.rmse_mode2 = n > 0 ? m2 / static_cast<double>(n) : 0.0;
}

}  // namespace

double calibrate_tau(const std::vector<double>& val_scores, double q) {
  if (val_scores.empty()) throw std::invalid_argument("calibration needs at least one validation score");
  check_q(q);
  if (q == 0.0) return -std::numeric_limits<double>::infinity();
  std::vector<double> s = val_scores;
  std::sort(s.begin(), s.end());
  const auto n = static_cast<long long>(s.size());
  const long long i = std::clamp(static_cast<long long>(std::ceil(q * static_cast<double>(n))) - 1, 0LL, n - 1);
  return s[static_cast<std::size_t>(i)];
}

GateConfig calibrate_gate(const std::vector<double>& val_scores, data::Split scores_split, double q, int horizon) {
  if (scores_split != data::Split::Val) {
    throw std::invalid_argument("tau is calibrated on the val split, got " + data::to_string(scores_split));
  }
  return {q, calibrate_tau(val_scores, q), data::Split::Val, horizon};
}

DeployBatch make_batch(const data::SplitData& split, int T, std::uint64_t base_seed) {
  const auto pairs = train::fixed_pairs(split, {T}, base_seed);
  DeployBatch b;
  b.split = split.split;
  b.horizon = T;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    b.traj_id.push_back(split.seeds[pairs.traj[i]]);
    b.s0.push_back(pairs.s0[i]);
    b.truth.push_back(pairs.sT[i]);
    b.solver.push_back(train::trajectory_params(split.trajectories[pairs.traj[i]]));
  }
  return b;
}

std::string to_string(Source s) {
  switch (s) {
    case Source::Surrogate: return "surrogate";
    case Source::Solver: return "solver";
    case Source::Failed: return "failed";
  }
  return "?";
}

double DeploymentResult::deferral_fraction() const noexcept {
  return rows.empty() ? 0.0 : static_cast<double>(deferred + failed) / static_cast<double>(rows.size());
}

double DeploymentResult::reduction() const noexcept {
  return rmse_mode1 > 0.0 ? 1.0 - rmse_mode2 / rmse_mode1 : 0.0;
}

DeploymentResult run_mode1(train::Predictor& model, const DeployBatch& batch) {
  const std::size_t n = batch.size();
  for (std::size_t i = 0; i < n; ++i) {
    if (batch.s0[i].shape() != batch.truth[i].shape()) throw nn::ShapeError("deploy batch state and truth differ");
  }
  DeploymentResult r;
  const std::vector<int> horizons(n, batch.horizon);
  const auto t0 = Clock::now();
  r.mode1 = model.predict(batch.s0, horizons);
  r.mode1_seconds = seconds_since(t0);
  r.mode2 = r.mode1;
  r.mode2_seconds = r.mode1_seconds;
  const double per = n > 0 ? r.mode1_seconds / static_cast<double>(n) : 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    if (r.mode1[i].shape() != batch.truth[i].shape()) throw nn::ShapeError("model output does not match the batch");
    DeploymentRow row;
    row.traj_id = batch.traj_id[i];
    row.split = batch.split;
    row.horizon = batch.horizon;
    row.rmse_mode1 = train::rmse(r.mode1[i], batch.truth[i]);
    row.rmse_mode2 = row.rmse_mode1;
    row.surrogate_seconds = per;
    r.rows.push_back(row);
  }
  r.kept = n;
  finish(r);
  return r;
}

DeploymentResult run_mode2(train::Predictor& model, const DeployBatch& batch, const std::vector<double>& scores,
                           const GateConfig& gate) {
  if (scores.size() != batch.size()) throw std::invalid_argument("one score per trajectory is required");
  if (gate.horizon != 0 && gate.horizon != batch.horizon) {
    throw std::invalid_argument("gate was calibrated for another horizon");
  }
  DeploymentResult r = run_mode1(model, batch);
  r.kept = 0;
  r.mode2_seconds = r.mode1_seconds;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    auto& row = r.rows[i];
    row.score = scores[i];
    row.tau = gate.tau;
    row.kept = scores[i] <= gate.tau;
    if (row.kept) {
      ++r.kept;
      continue;
    }
    const auto t0 = Clock::now();
    try {
      r.mode2[i] = env::advance(batch.solver[i], batch.s0[i], batch.horizon);
      row.solver_seconds = seconds_since(t0);
      row.rmse_mode2 = train::rmse(r.mode2[i], batch.truth[i]);
      row.source = Source::Solver;
      ++r.deferred;
    } catch (const env::SolverError&) {
      row.solver_seconds = seconds_since(t0);
      row.rmse_mode2.reset();
      row.source = Source::Failed;
      ++r.failed;
    }
    r.mode2_seconds += row.solver_seconds;
  }
  finish(r);
  return r;
}

double random_floor(double q) {
  check_q(q);
  return 1.0 - q;
}

RandomDeferral random_deferral(const std::vector<double>& rmse_mode1, double q, int resamples, std::uint64_t seed) {
  check_q(q);
  if (resamples < 1) throw std::invalid_argument("random deferral needs at least one resample");
  double total = 0.0;
  for (double e : rmse_mode1) total += e;
  RandomDeferral out;
  if (total <= 0.0) {
    out.reductions.assign(static_cast<std::size_t>(resamples), 0.0);
    return out;
  }
  Rng rng(derive_seed(seed, 0x72616e64ULL));
  for (int r = 0; r < resamples; ++r) {
    double removed = 0.0;
    for (double e : rmse_mode1) {
      if (rng.bernoulli(1.0 - q)) removed += e;
    }
    out.reductions.push_back(removed / total);
  }
  double s = 0.0;
  for (double x : out.reductions) s += x;
  out.mean = s / resamples;
  double v = 0.0;
  for (double x : out.reductions) v += (x - out.mean) * (x - out.mean);
  out.std = resamples > 1 ? std::sqrt(v / (resamples - 1)) : 0.0;
  return out;
}

std::vector<QSweepRow> q_sweep(train::Predictor& model, const DeployBatch& batch, const std::vector<double>& scores,
                               const std::vector<double>& val_scores, const std::vector<double>& qs, int resamples,
                               std::uint64_t seed) {
  if (!std::is_sorted(qs.begin(), qs.end())) throw std::invalid_argument("q values must be sorted");
  std::vector<QSweepRow> out;
  for (double q : qs) {
    const auto gate = calibrate_gate(val_scores, data::Split::Val, q, batch.horizon);
    const auto r = run_mode2(model, batch, scores, gate);
    std::vector<double> m1;
    for (const auto& row : r.rows) m1.push_back(row.rmse_mode1);
    QSweepRow row;
    row.q = q;
    row.tau = gate.tau;
    row.reduction = r.reduction();
    row.floor = random_floor(q);
    row.deferral_fraction = r.deferral_fraction();
    row.random_mean = random_deferral(m1, q, resamples, seed).mean;
    out.push_back(row);
  }
  return out;
}

void write_deployment_csv(const std::filesystem::path& path, const std::vector<DeploymentRow>& rows) {
  CsvTable t;
  t.header = {"traj_id", "split", "horizon", "score", "tau", "kept", "rmse_mode1", "rmse_mode2", "source",
              "solver_seconds", "surrogate_seconds"};
  for (const auto& r : rows) {
    t.add({std::to_string(r.traj_id), data::to_string(r.split), std::to_string(r.horizon), fmt_double(r.score),
           fmt_double(r.tau), r.kept ? "1" : "0", fmt_double(r.rmse_mode1), fmt_double(r.rmse_mode2),
           to_string(r.source), fmt_double(r.solver_seconds), fmt_double(r.surrogate_seconds)});
  }
  write_csv(path, t);
}

void write_q_sweep_csv(const std::filesystem::path& path, const std::vector<QSweepRow>& rows) {
  CsvTable t;
  t.header = {"q", "tau", "reduction", "floor", "deferral_fraction", "random_mean"};
  for (const auto& r : rows) {
    t.add({fmt_double(r.q), fmt_double(r.tau), fmt_double(r.reduction), fmt_double(r.floor),
           fmt_double(r.deferral_fraction), fmt_double(r.random_mean)});
  }
  write_csv(path, t);
}

}  // namespace hwm::deploy
