#include "hwm/trust/baselines.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>

#include "hwm/env/ball.hpp"
#include "hwm/nn/embedding.hpp"
#include "hwm/nn/ops.hpp"
#include "hwm/nn/optim.hpp"
#include "hwm/train/trainer.hpp"

namespace hwm::trust {

namespace {

/// Mean over cells of sqrt(sum over channels of the across-sample variance),
/// with every channel divided by its std.
double spread(const std::vector<env::State>& preds, const data::NormStats& norm) {
  const auto& first = preds.front();
  const std::size_t c = data::state_channels(first);
  const std::size_t plane = first.size() / c;
  const std::size_t cells = first.rank() == 1 ? 1 : plane;
  const double k = static_cast<double>(preds.size());
  std::vector<double> var(cells, 0.0);
  for (std::size_t ch = 0; ch < c; ++ch) {
    const double inv = 1.0 / norm.std[ch];
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t e = ch * plane + i;
      double m = 0.0;
      for (const auto& p : preds) m += p[e] * inv;
      m /= k;
      double v = 0.0;
      for (const auto& p : preds) {
        const double d = p[e] * inv - m;
        v += d * d;
      }
      var[first.rank() == 1 ? 0 : i] += v / k;
    }
  }
  double total = 0.0;
  for (double v : var) total += std::sqrt(v);
  return total / static_cast<double>(cells);
}

void require_ball(const env::State& s, const char* what) {
  if (s.rank() != 1 || s.size() != 9) throw NotApplicable(std::string(what) + " applies to ball states only");
}

}  // namespace

std::vector<double> ensemble_scores(std::span<train::Predictor* const> members, const data::NormStats& norm,
                                    std::span<const env::State> states, int T) {
  if (members.size() < 2) throw std::invalid_argument("an ensemble needs at least two members");
  const std::vector<int> horizons(states.size(), T);
  std::vector<std::vector<env::State>> preds;
  for (auto* m : members) preds.push_back(m->predict(states, horizons));
  std::vector<double> out(states.size());
  for (std::size_t i = 0; i < states.size(); ++i) {
    std::vector<env::State> per;
    for (const auto& p : preds) per.push_back(p[i]);
    out[i] = spread(per, norm);
  }
  return out;
}

double tta_score(train::Predictor& model, const data::NormStats& norm, const env::State& s, int T,
                 const TtaOptions& opts, Rng& rng) {
  if (opts.sigma < 0.0) throw std::invalid_argument("TTA noise must be >= 0");
  if (opts.replicas < 2) throw std::invalid_argument("TTA needs at least two replicas");
  const std::size_t c = data::state_channels(s);
  const std::size_t plane = s.size() / c;
  std::vector<env::State> noisy;
  for (int r = 0; r < opts.replicas; ++r) {
    env::State x = s;
    for (std::size_t ch = 0; ch < c; ++ch)
      for (std::size_t i = 0; i < plane; ++i) {
        x[ch * plane + i] += static_cast<float>(opts.sigma * norm.std[ch] * rng.normal());
      }
    noisy.push_back(std::move(x));
  }
  if (opts.sigma == 0.0) return 0.0;
  const std::vector<int> horizons(noisy.size(), T);
  return spread(model.predict(noisy, horizons), norm);
}

double grad_mag_score(const env::State& s, const data::NormStats& norm) {
  if (s.rank() != 3) throw NotApplicable("gradient magnitude needs a spatial state");
  const auto z = norm.normalize(s);
  const std::size_t C = z.dim(0), H = z.dim(1), W = z.dim(2);
  double total = 0.0;
  for (std::size_t c = 0; c < C; ++c) {
    const float* p = z.ptr() + c * H * W;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const double gx = 0.5 * (p[y * W + std::min(x + 1, W - 1)] - p[y * W + (x == 0 ? 0 : x - 1)]);
        const double gy = 0.5 * (p[std::min(y + 1, H - 1) * W + x] - p[(y == 0 ? 0 : y - 1) * W + x]);
        total += std::sqrt(gx * gx + gy * gy);
      }
  }
  return total / static_cast<double>(H * W);
}

std::vector<double> pooled_features(const env::State& s, const data::NormStats& norm) {
  const auto z = norm.normalize(s);
  if (z.rank() == 1) return {z.storage().begin(), z.storage().end()};
  const std::size_t C = z.dim(0), H = z.dim(1), W = z.dim(2), n = H * W;
  std::vector<double> f;
  for (std::size_t c = 0; c < C; ++c) {
    const float* p = z.ptr() + c * n;
    double m = 0.0, mx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      m += p[i];
      mx = std::max(mx, std::abs(static_cast<double>(p[i])));
    }
    m /= static_cast<double>(n);
    double v = 0.0, g = 0.0;
    for (std::size_t y = 0; y < H; ++y)
      for (std::size_t x = 0; x < W; ++x) {
        const double d = p[y * W + x] - m;
        v += d * d;
        const double gx = 0.5 * (p[y * W + std::min(x + 1, W - 1)] - p[y * W + (x == 0 ? 0 : x - 1)]);
        const double gy = 0.5 * (p[std::min(y + 1, H - 1) * W + x] - p[(y == 0 ? 0 : y - 1) * W + x]);
        g += std::sqrt(gx * gx + gy * gy);
      }
    f.insert(f.end(), {m, std::sqrt(v / static_cast<double>(n)), g / static_cast<double>(n), mx});
  }
  return f;
}

// ---- learned error head ----------------------------------------------------

nn::Tensor<float> ErrorHead::inputs(const std::vector<std::vector<double>>& feats, std::span<const int> horizons) const {
  const std::size_t d = feat_mean_.size();
  const std::size_t width = d + nn::kHorizonEmbedDim;
  nn::Tensor<float> x({feats.size(), width});
  const auto emb = nn::horizon_embed_batch<float>(horizons);
  for (std::size_t i = 0; i < feats.size(); ++i) {
    for (std::size_t j = 0; j < d; ++j) x[i * width + j] = static_cast<float>((feats[i][j] - feat_mean_[j]) / feat_std_[j]);
    for (std::size_t j = 0; j < nn::kHorizonEmbedDim; ++j) x[i * width + d + j] = emb[i * nn::kHorizonEmbedDim + j];
  }
  return x;
}

nn::Var<float> ErrorHead::forward(nn::Graph<float>& g, nn::ParamStore<float>& params, nn::Var<float> x) const {
  auto h = nn::silu(nn::linear(x, g.parameter(params, 0), g.parameter(params, 1)));
  return nn::linear(h, g.parameter(params, 2), g.parameter(params, 3));
}

void ErrorHead::fit(const std::vector<env::State>& states, const std::vector<int>& horizons,
                    const std::vector<double>& rmse, const data::NormStats& norm, const Options& opts) {
  if (states.empty() || states.size() != horizons.size() || states.size() != rmse.size()) {
    throw std::invalid_argument("error head needs matching, non-empty states, horizons and errors");
  }
  norm_ = norm;
  std::vector<std::vector<double>> feats;
  for (const auto& s : states) feats.push_back(pooled_features(s, norm));
  const std::size_t d = feats.front().size();
  feat_mean_.assign(d, 0.0);
  feat_std_.assign(d, 0.0);
  for (const auto& f : feats)
    for (std::size_t j = 0; j < d; ++j) feat_mean_[j] += f[j] / static_cast<double>(feats.size());
  for (const auto& f : feats)
    for (std::size_t j = 0; j < d; ++j) feat_std_[j] += (f[j] - feat_mean_[j]) * (f[j] - feat_mean_[j]);
  for (auto& v : feat_std_) {
    v = std::sqrt(v / static_cast<double>(feats.size()));
    if (v < 1e-12) v = 1.0;
  }

  const std::size_t in = d + nn::kHorizonEmbedDim;
  params_ = nn::ParamStore<float>();
  auto add_linear = [&](const std::string& name, std::size_t fan_in, std::size_t fan_out, std::uint64_t stream) {
    Rng rng(derive_seed(opts.seed, stream));
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    nn::Tensor<float> w({fan_out, fan_in});
    for (auto& v : w.data()) v = static_cast<float>(rng.uniform(-bound, bound));
    params_.add(name + ".weight", std::move(w));
    params_.add(name + ".bias", nn::Tensor<float>({fan_out}));
  };
  add_linear("head.fc1", in, opts.hidden, 1);
  add_linear("head.fc2", opts.hidden, 1, 2);

  const auto x = inputs(feats, horizons);
  nn::Tensor<float> y({rmse.size(), 1});
  for (std::size_t i = 0; i < rmse.size(); ++i) y[i] = static_cast<float>(std::log1p(rmse[i]));

  nn::AdamW opt(params_, {opts.lr, 0.0, 1.0});
  for (int e = 0; e < opts.epochs; ++e) {
    nn::Graph<float> g;
    const auto loss = nn::mse(forward(g, params_, g.input(x)), g.input(y));
    final_loss_ = loss.value()[0];
    g.backward(loss);
    opt.step(params_, g.gradients(params_).grads);
  }
  nn::Graph<float> g(false);
  final_loss_ = nn::mse(forward(g, params_, g.input(x)), g.input(y)).value()[0];
}

double ErrorHead::score(const env::State& s, int T) const {
  if (!trained()) throw std::logic_error("error head queried before training");
  const int h[1] = {T};
  const auto x = inputs({pooled_features(s, norm_)}, h);
  nn::Graph<float> g(false);
  return forward(g, params_, g.input(x)).value()[0];
}

namespace {

struct LabelledPairs {
  train::PairSet pairs;
  std::vector<double> rmse;
};

LabelledPairs label_pairs(train::Predictor& model, const data::SplitData& split, const std::vector<int>& horizons,
                          std::uint64_t base_seed) {
  LabelledPairs out;
  out.pairs = train::fixed_pairs(split, horizons, base_seed);
  const auto pred = model.predict(out.pairs.s0, out.pairs.T);
  for (std::size_t i = 0; i < pred.size(); ++i) out.rmse.push_back(train::rmse(pred[i], out.pairs.sT[i]));
  return out;
}

}  // namespace

ErrorHead train_error_head(train::Predictor& model, const data::SplitData& train_split, const std::vector<int>& horizons,
                           const data::NormStats& norm, std::uint64_t base_seed, const ErrorHead::Options& opts) {
  if (train_split.split != data::Split::Train) {
    throw std::invalid_argument("the error head trains on train-split errors only, got " +
                                data::to_string(train_split.split));
  }
  const auto lp = label_pairs(model, train_split, horizons, base_seed);
  ErrorHead head;
  head.fit(lp.pairs.s0, lp.pairs.T, lp.rmse, norm, opts);
  return head;
}

// ---- conformal -------------------------------------------------------------

ConformalScorer::ConformalScorer(std::vector<std::vector<double>> features, std::vector<double> rmse, std::size_t k)
    : feats_(std::move(features)), rmse_(std::move(rmse)), k_(k) {
  if (feats_.empty()) throw std::invalid_argument("conformal scorer needs a non-empty calibration set");
  if (feats_.size() != rmse_.size()) throw std::invalid_argument("calibration features and errors differ in length");
  if (k_ == 0) throw std::invalid_argument("k must be positive");
  if (k_ > feats_.size()) {
    warnings_.push_back("k=" + std::to_string(k_) + " exceeds the calibration set of " +
                        std::to_string(feats_.size()) + "; clamped");
    k_ = feats_.size();
  }
  const std::size_t d = feats_.front().size();
  mean_.assign(d, 0.0);
  std_.assign(d, 0.0);
  const double n = static_cast<double>(feats_.size());
  for (const auto& f : feats_)
    for (std::size_t j = 0; j < d; ++j) mean_[j] += f[j] / n;
  for (const auto& f : feats_)
    for (std::size_t j = 0; j < d; ++j) std_[j] += (f[j] - mean_[j]) * (f[j] - mean_[j]);
  for (auto& v : std_) {
    v = std::sqrt(v / n);
    if (v < 1e-12) v = 1.0;
  }
}

double ConformalScorer::score(const std::vector<double>& query) const {
  if (query.size() != mean_.size()) throw std::invalid_argument("query feature width differs from calibration");
  std::vector<std::pair<double, std::size_t>> dist(feats_.size());
  for (std::size_t i = 0; i < feats_.size(); ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < query.size(); ++j) {
      const double d = (query[j] - feats_[i][j]) / std_[j];
      s += d * d;
    }
    dist[i] = {s, i};
  }
  std::partial_sort(dist.begin(), dist.begin() + static_cast<std::ptrdiff_t>(k_), dist.end());
  double total = 0.0;
  for (std::size_t i = 0; i < k_; ++i) total += rmse_[dist[i].second];
  return total / static_cast<double>(k_);
}

std::vector<double> ConformalScorer::features(const env::State& s, int T, const data::NormStats& norm) {
  auto f = pooled_features(s, norm);
  f.push_back(std::log2(static_cast<double>(T)));
  return f;
}

ConformalScorer calibrate_conformal(train::Predictor& model, const data::SplitData& val_split,
                                    const std::vector<int>& horizons, const data::NormStats& norm,
                                    std::uint64_t base_seed, std::size_t k) {
  if (val_split.split != data::Split::Val) {
    throw std::invalid_argument("conformal calibration uses the val split only, got " +
                                data::to_string(val_split.split));
  }
  const auto lp = label_pairs(model, val_split, horizons, base_seed);
  std::vector<std::vector<double>> feats;
  for (std::size_t i = 0; i < lp.pairs.size(); ++i) {
    feats.push_back(ConformalScorer::features(lp.pairs.s0[i], lp.pairs.T[i], norm));
  }
  return ConformalScorer(std::move(feats), lp.rmse, k);
}

// ---- physics residuals -----------------------------------------------------

namespace {

env::BallState to_ball(const env::State& s) {
  env::BallState b;
  for (std::size_t i = 0; i < 9; ++i) b[i] = s[i];
  return b;
}

}  // namespace

double energy_residual(const env::State& s0, const env::State& pred, double gravity) {
  require_ball(s0, "energy residual");
  require_ball(pred, "energy residual");
  return std::abs(env::ball_energy(to_ball(pred), gravity) - env::ball_energy(to_ball(s0), gravity));
}

double momentum_residual(const env::State& s0, const env::State& pred) {
  require_ball(s0, "momentum residual");
  require_ball(pred, "momentum residual");
  double s = 0.0;
  for (std::size_t i = 3; i < 6; ++i) {
    const double d = static_cast<double>(pred[i]) - s0[i];
    s += d * d;
  }
  return std::sqrt(s);
}

// ---- Richardson ------------------------------------------------------------

int solver_order(env::EnvId env) { return env == env::EnvId::Oregonator ? 2 : 1; }

RichardsonResult richardson_score(const env::EnvParams& solver, const env::State& s, int T, RichardsonVariant v,
                                  const data::NormStats& norm, std::optional<int> order) {
  if (T < 1) throw std::invalid_argument("Richardson needs T >= 1");
  const auto t0 = std::chrono::steady_clock::now();
  const auto a = env::advance(solver, s, T, env::Resolution::Standard);
  const auto b = env::advance(solver, s, T, env::Resolution::Half);
  RichardsonResult r;
  r.cost_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  if (v == RichardsonVariant::Fix) {
    const int p = order.value_or(solver_order(env::env_of(solver)));
    if (p < 1) throw std::invalid_argument("solver order must be >= 1");
    r.map = normalized_distance(a, b, norm, T);
    const double denom = std::ldexp(1.0, p) - 1.0;
    for (auto& c : r.map.cells) c /= denom;
    return r;
  }
  env::State g(a.shape());
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double x = a[i], y = b[i];
    g[i] = static_cast<float>(x * y > 0.0 ? std::copysign(std::sqrt(x * y), x) : 0.5 * (x + y));
  }
  r.map = normalized_distance(a, g, norm, T);
  return r;
}

}  // namespace hwm::trust
