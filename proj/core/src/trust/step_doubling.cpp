#include "hwm/trust/step_doubling.hpp"

#include <cmath>
#include <numeric>

namespace hwm::trust {

double aggregate(const ErrorMap& map) {
  if (map.cells.empty()) throw std::invalid_argument("empty error map");
  return std::accumulate(map.cells.begin(), map.cells.end(), 0.0) / static_cast<double>(map.cells.size());
}

ErrorMap normalized_distance(const env::State& a, const env::State& b, const data::NormStats& norm, int horizon) {
  if (a.shape() != b.shape()) throw nn::ShapeError("error map of states with different shapes");
  const std::size_t c = data::state_channels(a);
  if (c != norm.channels()) throw std::invalid_argument("state channels do not match the norm stats");
  ErrorMap m;
  m.horizon = horizon;
  const std::size_t plane = a.size() / c;
  if (a.rank() == 3) {
    m.height = a.dim(1);
    m.width = a.dim(2);
  }
  // A vector state is one "cell" whose channels are its components.
  const std::size_t cells = a.rank() == 1 ? 1 : plane;
  m.cells.assign(cells, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / norm.std[ch];
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = ch * plane + i;
      const double d = (static_cast<double>(a[k]) - static_cast<double>(b[k])) * inv;
      m.cells[a.rank() == 1 ? 0 : i] += d * d;
    }
  }
  for (auto& v : m.cells) v = std::sqrt(v);
  return m;
}

void check_probe(const train::Predictor& model, int T, ProbeOptions opts) {
  if (model.single_horizon()) {
    throw ProbeRefused("step-doubling is structurally undefined for a single-horizon surrogate");
  }
  if (T < 2 || T % 2 != 0) throw InvalidHorizon("step-doubling needs an even horizon, got " + std::to_string(T));
  if (opts.allow_outside_ladder) return;
  if (!model.supports(T)) throw InvalidHorizon("horizon " + std::to_string(T) + " is not in the model's ladder");
  if (!model.supports(T / 2)) {
    throw InvalidHorizon("half horizon " + std::to_string(T / 2) + " is not in the model's ladder");
  }
}

std::vector<ErrorMap> step_doubling(train::Predictor& model, const data::NormStats& norm,
                                    std::span<const env::State> states, int T, ProbeOptions opts) {
  check_probe(model, T, opts);
  const std::vector<int> full(states.size(), T), half(states.size(), T / 2);
  const auto single = model.predict(states, full);
  const auto mid = model.predict(states, half);
  const auto chained = model.predict(mid, half);
  std::vector<ErrorMap> out;
  out.reserve(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) out.push_back(normalized_distance(single[i], chained[i], norm, T));
  return out;
}

ErrorMap step_doubling(train::Predictor& model, const data::NormStats& norm, const env::State& s, int T,
                       ProbeOptions opts) {
  return std::move(step_doubling(model, norm, std::span<const env::State>(&s, 1), T, opts).front());
}

}  // namespace hwm::trust
