#include "hwm/data/split.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace hwm::data {

std::string to_string(Split s) {
  switch (s) {
    case Split::Train:
      return "train";
    case Split::Val:
      return "val";
    case Split::Test:
      return "test";
    case Split::OodNear:
      return "ood-near";
    case Split::OodFar:
      return "ood-far";
  }
  return "unknown";
}

Split split_from_string(const std::string& name) {
  for (Split s : kAllSplits)
    if (to_string(s) == name) return s;
  throw std::invalid_argument("unknown split '" + name + "' (train, val, test, ood-near, ood-far)");
}

bool is_ood(Split s) { return s == Split::OodNear || s == Split::OodFar; }

double Band::sample(Rng& rng) const {
  double total = 0.0;
  for (const auto& p : parts) total += p.hi - p.lo;
  if (total <= 0.0) return parts.front().lo;
  double r = rng.uniform() * total;
  for (const auto& p : parts) {
    const double len = p.hi - p.lo;
    if (r < len) return p.lo + r;
    r -= len;
  }
  return parts.back().hi;
}

bool Band::contains(double x) const {
  return std::any_of(parts.begin(), parts.end(), [x](const Interval& p) { return x >= p.lo && x <= p.hi; });
}

void Band::validate(const std::string& name) const {
  if (parts.empty()) throw std::invalid_argument("band '" + name + "' has no intervals");
  for (const auto& p : parts) {
    if (!std::isfinite(p.lo) || !std::isfinite(p.hi) || p.lo > p.hi) {
      throw std::invalid_argument("band '" + name + "' has a malformed interval [" + std::to_string(p.lo) + ", " +
                                  std::to_string(p.hi) + "]");
    }
  }
}

BandSet default_bands(env::EnvId env, Split split) {
  const int k = split == Split::OodNear ? 1 : split == Split::OodFar ? 2 : 0;
  switch (env) {
    case env::EnvId::Oregonator: {
      const Band eps[3] = {{{{0.02, 0.08}}}, {{{0.015, 0.02}, {0.08, 0.10}}}, {{{0.010, 0.015}, {0.10, 0.15}}}};
      const Band f[3] = {{{{0.5, 2.0}}}, {{{0.4, 0.5}, {2.0, 2.2}}}, {{{0.3, 0.4}, {2.2, 2.5}}}};
      return {{"eps", eps[k]}, {"f", f[k]}};
    }
    case env::EnvId::Euler: {
      const Band e0[3] = {{{{0.5, 2.0}}}, {{{0.3, 0.5}, {2.0, 2.5}}}, {{{0.1, 0.3}, {2.5, 5.0}}}};
      const Band rho[3] = {{{{0.8, 1.2}}}, {{{0.6, 0.8}, {1.2, 1.5}}}, {{{0.4, 0.6}, {1.5, 2.0}}}};
      return {{"e0", e0[k]}, {"rho_bg", rho[k]}};
    }
    case env::EnvId::Ball: {
      const Band e[3] = {{{{0.70, 0.95}}}, {{{0.50, 0.70}, {0.95, 0.99}}}, {{{0.30, 0.50}}}};
      const Band g[3] = {{{{-10.5, -9.0}}}, {{{-12.0, -10.5}, {-9.0, -7.5}}}, {{{-15.0, -12.0}, {-7.5, -5.0}}}};
      return {{"restitution", e[k]}, {"gravity", g[k]}};
    }
  }
  return {};
}

void validate(const SplitSpec& spec) {
  env::validate(spec.solver);
  if (env::env_of(spec.solver) != spec.env) throw std::invalid_argument("split spec solver params are for another env");
  if (spec.count >= kSeedStride) throw std::invalid_argument("split count must stay below the seed stride");
  if (spec.frames < 2) throw std::invalid_argument("trajectories need at least 2 frames");
  for (const auto& [name, band] : spec.bands) band.validate(name);
  for (const auto& [name, band] : spec.id_bands) band.validate(name);
  if (spec.quadrant_jitter < 0.0 || spec.quadrant_jitter >= 0.5) {
    throw std::invalid_argument("quadrant jitter must be in [0, 0.5)");
  }
}

void check_disjoint(const std::vector<SplitSpec>& specs) {
  for (std::size_t i = 0; i < specs.size(); ++i)
    for (std::size_t j = i + 1; j < specs.size(); ++j) {
      const auto& a = specs[i];
      const auto& b = specs[j];
      if (a.env != b.env || a.count == 0 || b.count == 0) continue;
      const bool overlap = a.seed_first < b.seed_first + b.count && b.seed_first < a.seed_first + a.count;
      if (overlap) {
        throw std::invalid_argument("seed ranges of splits " + to_string(a.split) + " and " + to_string(b.split) +
                                    " overlap");
      }
    }
}

namespace {

std::map<Split, std::size_t> counts(std::size_t tr, std::size_t va, std::size_t te, std::size_t on, std::size_t of) {
  return {{Split::Train, tr}, {Split::Val, va}, {Split::Test, te}, {Split::OodNear, on}, {Split::OodFar, of}};
}

}  // namespace

EnvDataConfig desk_config(env::EnvId id) {
  EnvDataConfig c;
  c.env = id;
  switch (id) {
    case env::EnvId::Oregonator: {
      env::OregonatorParams p;
      p.grid = 64;
      c.solver = p;
      c.frames = 101;
      c.counts = counts(120, 15, 15, 25, 25);
      c.ladder = {1, 2, 4, 8, 16, 32, 64};
      break;
    }
    case env::EnvId::Euler: {
      env::EulerParams p;
      p.grid = 64;
      c.solver = p;
      c.frames = 80;
      c.counts = counts(50, 30, 60, 30, 30);
      c.ladder = {1, 2, 4, 8, 16, 32};
      break;
    }
    case env::EnvId::Ball: {
      c.solver = env::BallParams{};
      c.frames = 101;
      c.counts = counts(100, 50, 100, 50, 50);
      c.ladder = {1, 2, 4, 8, 16, 32};
      break;
    }
  }
  return c;
}

EnvDataConfig paper_config(env::EnvId id) {
  EnvDataConfig c = desk_config(id);
  c.ladder = {1, 2, 4, 8, 16, 32, 64};
  switch (id) {
    case env::EnvId::Oregonator: {
      auto p = std::get<env::OregonatorParams>(c.solver);
      p.grid = 256;
      c.solver = p;
      c.frames = 201;
      c.counts = counts(1200, 150, 150, 250, 250);
      break;
    }
    case env::EnvId::Euler: {
      auto p = std::get<env::EulerParams>(c.solver);
      p.grid = 128;
      c.solver = p;
      c.frames = 100;
      c.counts = counts(500, 100, 100, 150, 150);
      break;
    }
    case env::EnvId::Ball:
      c.frames = 101;
      c.counts = counts(1000, 200, 200, 200, 200);
      break;
  }
  return c;
}

SplitSpec split_spec(const EnvDataConfig& cfg, Split split) {
  SplitSpec s;
  s.env = cfg.env;
  s.split = split;
  const auto it = cfg.counts.find(split);
  s.count = it == cfg.counts.end() ? 0 : it->second;
  s.seed_first = 1 + static_cast<std::uint64_t>(split) * kSeedStride;
  s.base_seed = cfg.seed;
  s.frames = cfg.frames;
  s.solver = cfg.solver;
  s.bands = default_bands(cfg.env, split);
  s.id_bands = default_bands(cfg.env, Split::Train);
  s.quadrant_jitter = (cfg.env == env::EnvId::Euler && split == Split::OodFar) ? 0.05 : 0.0;
  validate(s);
  return s;
}

namespace {

const Band& band(const BandSet& set, const char* name) {
  const auto it = set.find(name);
  if (it == set.end()) throw std::invalid_argument(std::string("split spec lacks band '") + name + "'");
  return it->second;
}

}  // namespace

TrajectorySpec sample_params(const SplitSpec& spec, std::size_t index) {
  if (index >= spec.count) {
    throw std::out_of_range("trajectory index " + std::to_string(index) + " outside split of " +
                            std::to_string(spec.count));
  }
  TrajectorySpec t;
  t.seed = spec.seed_first + index;
  Rng rng(derive_seed(spec.base_seed, static_cast<std::uint64_t>(spec.env), t.seed));
  t.params = spec.solver;
  env::ParamList extra;

  switch (spec.env) {
    case env::EnvId::Oregonator: {
      auto p = std::get<env::OregonatorParams>(spec.solver);
      // OOD sub-modes in equal proportion: 0 shifts f only, 1 eps only, 2 both.
      const int mode = is_ood(spec.split) ? static_cast<int>(rng.below(3)) : -1;
      const bool shift_eps = mode == 1 || mode == 2, shift_f = mode == 0 || mode == 2;
      p.eps = band(mode < 0 || shift_eps ? spec.bands : spec.id_bands, "eps").sample(rng);
      p.f = band(mode < 0 || shift_f ? spec.bands : spec.id_bands, "f").sample(rng);
      t.params = p;
      const double u = rng.uniform();
      t.ic.kind = u < 0.5 ? "spiral" : u < 0.8 ? "target" : "random";
      extra = {{"ic_kind", u < 0.5 ? 0.0 : u < 0.8 ? 1.0 : 2.0}, {"ood_mode", mode}};
      break;
    }
    case env::EnvId::Euler: {
      if (rng.bernoulli(0.5)) {
        t.ic.kind = "sedov";
        t.ic.e0 = band(spec.bands, "e0").sample(rng);
        t.ic.rho_bg = band(spec.bands, "rho_bg").sample(rng);
        extra = {{"ic_kind", 0.0}, {"e0", t.ic.e0}, {"rho_bg", t.ic.rho_bg}};
      } else {
        static constexpr int kConfigs[4] = {3, 4, 6, 12};
        t.ic.kind = "quadrant";
        t.ic.config = kConfigs[rng.below(4)];
        if (spec.quadrant_jitter > 0.0) {
          t.ic.xc = 0.5 + rng.uniform(-spec.quadrant_jitter, spec.quadrant_jitter);
          t.ic.yc = 0.5 + rng.uniform(-spec.quadrant_jitter, spec.quadrant_jitter);
        }
        extra = {{"ic_kind", 1.0}, {"config", t.ic.config}, {"xc", t.ic.xc}, {"yc", t.ic.yc}};
      }
      break;
    }
    case env::EnvId::Ball: {
      auto p = std::get<env::BallParams>(spec.solver);
      p.restitution = band(spec.bands, "restitution").sample(rng);
      p.gravity = band(spec.bands, "gravity").sample(rng);
      t.params = p;
      t.ic.kind = "default";
      extra = {{"ic_kind", 0.0}};
      break;
    }
  }
  t.ic_seed = rng.next_u64();
  t.record = env::to_param_list(t.params);
  t.record.insert(t.record.end(), extra.begin(), extra.end());
  return t;
}

env::Trajectory generate_trajectory(const TrajectorySpec& ts, int frames) {
  Rng ic_rng(ts.ic_seed);
  env::Trajectory t = env::rollout(ts.params, env::make_initial(ts.params, ts.ic, ic_rng), frames);
  t.params = ts.record;
  return t;
}

void validate_ladder(const std::vector<int>& ladder) {
  if (ladder.empty()) throw std::invalid_argument("horizon ladder is empty");
  for (std::size_t i = 0; i < ladder.size(); ++i) {
    if (ladder[i] < 1) throw std::invalid_argument("horizon ladder values must be >= 1");
    if (i > 0 && ladder[i] <= ladder[i - 1]) throw std::invalid_argument("horizon ladder must be strictly increasing");
  }
}

bool doubling_closed(const std::vector<int>& ladder) {
  if (ladder.empty()) return false;
  const std::set<int> s(ladder.begin(), ladder.end());
  const int lowest = *s.begin();
  return std::all_of(ladder.begin(), ladder.end(),
                     [&](int T) { return T == lowest || (T % 2 == 0 && s.count(T / 2) == 1); });
}

}  // namespace hwm::data
