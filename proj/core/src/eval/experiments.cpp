#include "hwm/eval/experiments.hpp"

#include <algorithm>
#include <stdexcept>

#include "hwm/train/trainer.hpp"
#include "hwm/trust/step_doubling.hpp"
#include "hwm/trust/table.hpp"
#include "hwm/util/csv.hpp"

namespace hwm::eval {

std::vector<ClosedLoopPoint> closed_loop(train::Predictor& model, const data::SplitData& split, int h,
                                         const std::vector<int>& ks, std::uint64_t base_seed) {
  if (ks.empty() || h < 1) throw std::invalid_argument("closed loop needs h >= 1 and at least one k");
  for (int k : ks) {
    if (k < 1) throw std::invalid_argument("closed loop step counts must be positive");
  }
  const int k_max = *std::max_element(ks.begin(), ks.end());
  const int span = k_max * h;
  std::vector<env::State> x;
  std::vector<std::size_t> starts;
  for (std::size_t i = 0; i < split.size(); ++i) {
    const auto& t = split.trajectories[i];
    if (static_cast<std::size_t>(span) >= t.length()) {
      throw std::invalid_argument("k * h = " + std::to_string(span) + " exceeds the stored trajectory length");
    }
    const std::size_t start = data::eval_start(base_seed, split.seeds[i], span, t.length());
    starts.push_back(start);
    x.push_back(t.frames[start]);
  }
  std::vector<ClosedLoopPoint> out;
  const std::vector<int> horizons(x.size(), h);
  for (int k = 1; k <= k_max; ++k) {
    x = model.predict(x, horizons);
    if (std::find(ks.begin(), ks.end(), k) == ks.end()) continue;
    double sum = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
      sum += train::rmse(x[i], split.trajectories[i].frames[starts[i] + static_cast<std::size_t>(k * h)]);
    }
    out.push_back({k, x.empty() ? 0.0 : sum / static_cast<double>(x.size()), x.size()});
  }
  return out;
}

void write_closed_loop_csv(const std::filesystem::path& path, const std::string& env, int h,
                           const std::vector<ClosedLoopPoint>& points) {
  CsvTable t;
  t.header = {"env", "horizon", "k", "rmse", "n"};
  for (const auto& p : points) {
    t.add({env, std::to_string(h), std::to_string(p.k), fmt_double(p.rmse), std::to_string(p.n)});
  }
  write_csv(path, t);
}

std::vector<EvalCell> beyond_tmax(train::NeuralSurrogate& model, const data::SplitData& split,
                                  const std::vector<int>& horizons, std::uint64_t base_seed, const CellOptions& opts) {
  const trust::ProbeOptions probe{.allow_outside_ladder = true};
  std::vector<trust::TrustRow> rows;
  for (int T : horizons) {
    trust::check_probe(model, T, probe);
    for (const auto& t : split.trajectories) {
      if (static_cast<std::size_t>(T) >= t.length()) {
        throw std::invalid_argument("horizon " + std::to_string(T) + " exceeds the stored trajectory length");
      }
    }
    const auto pairs = train::fixed_pairs(split, {T}, base_seed);
    const auto pred = model.predict(pairs.s0, pairs.T);
    const auto maps = trust::step_doubling(model, model.norm(), pairs.s0, T, probe);
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      rows.push_back({split.seeds[pairs.traj[i]], split.split, T, trust::method::kStepDoubling,
                      trust::aggregate(maps[i]), train::rmse(pred[i], pairs.sT[i]), 0.0});
    }
  }
  return eval_cells(env::to_string(split.env), rows, opts);
}

std::vector<int> extrapolated_horizons(int t_max) {
  auto even = [](double v) { return 2 * static_cast<int>(std::lround(v / 2.0)); };
  return {even(t_max), even(1.5 * t_max), even(2.0 * t_max)};
}

}  // namespace hwm::eval
