#include "hwm/trust/table.hpp"

#include <algorithm>
#include <chrono>

#include "hwm/train/trainer.hpp"
#include "hwm/util/binio.hpp"
#include "hwm/util/csv.hpp"

namespace hwm::trust {

const std::vector<std::string>& all_methods() {
  static const std::vector<std::string> m{method::kStepDoubling, method::kEnsemble,       method::kTta,
                                          method::kGradMag,      method::kErrorHead,      method::kConformal,
                                          method::kEnergy,       method::kMomentum,       method::kRichardsonFix,
                                          method::kRichardsonProd};
  return m;
}

void write_trust_csv(const std::filesystem::path& path, const std::vector<TrustRow>& rows) {
  CsvTable t;
  t.header = {"traj_id", "split", "horizon", "method", "score", "true_rmse", "cost_seconds"};
  for (const auto& r : rows) {
    t.add({std::to_string(r.traj_id), data::to_string(r.split), std::to_string(r.horizon), r.method,
           fmt_double(r.score), fmt_double(r.true_rmse), fmt_double(r.cost_seconds)});
  }
  write_csv(path, t);
}

std::vector<TrustRow> read_trust_csv(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  const std::size_t ci = t.column("traj_id"), cs = t.column("split"), ch = t.column("horizon"),
                    cm = t.column("method"), csc = t.column("score"), ct = t.column("true_rmse"),
                    cc = t.column("cost_seconds");
  std::vector<TrustRow> rows;
  try {
    for (const auto& r : t.rows) {
      rows.push_back({std::stoull(r[ci]), data::split_from_string(r[cs]), std::stoi(r[ch]), r[cm], std::stod(r[csc]),
                      std::stod(r[ct]), std::stod(r[cc])});
    }
  } catch (const std::exception& e) {
    throw FormatError(FormatErrc::Malformed, path.string() + ": " + e.what());
  }
  return rows;
}

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

bool wants(const std::vector<std::string>& methods, const char* m) {
  return std::find(methods.begin(), methods.end(), m) != methods.end();
}

}  // namespace

std::vector<TrustRow> score_split(ScoringContext& ctx, const data::SplitData& split, const std::vector<int>& horizons,
                                  const std::vector<std::string>& methods) {
  if (ctx.model == nullptr) throw std::invalid_argument("scoring needs a surrogate");
  for (const auto& m : methods) {
    if (!wants(all_methods(), m.c_str())) throw std::invalid_argument("unknown trust method '" + m + "'");
  }
  if (wants(methods, method::kEnsemble) && ctx.ensemble.empty()) {
    throw std::invalid_argument("ensemble scoring needs at least two members (the model plus one more)");
  }
  if (wants(methods, method::kErrorHead) && (ctx.head == nullptr || !ctx.head->trained())) {
    throw std::invalid_argument("error-head scoring needs a trained head");
  }
  if (wants(methods, method::kConformal) && ctx.conformal == nullptr) {
    throw std::invalid_argument("conformal scoring needs a calibrated scorer");
  }
  const auto& norm = ctx.model->norm();
  const bool ball = split.env == env::EnvId::Ball;
  std::vector<TrustRow> rows;

  for (int T : horizons) {
    const auto pairs = train::fixed_pairs(split, {T}, ctx.seed);
    const std::size_t n = pairs.size();
    if (n == 0) continue;
    const auto pred = ctx.model->predict(pairs.s0, pairs.T);
    std::vector<double> rmse(n);
    for (std::size_t i = 0; i < n; ++i) rmse[i] = train::rmse(pred[i], pairs.sT[i]);

    auto emit = [&](std::size_t i, const char* m, double score, double cost) {
      rows.push_back({split.seeds[pairs.traj[i]], split.split, T, m, score, rmse[i], cost});
    };

    for (const auto& m : methods) {
      if (m == method::kStepDoubling) {
        if (T % 2 != 0 || !ctx.model->supports(T / 2)) {
          if (ctx.model->single_horizon()) check_probe(*ctx.model, T);
          continue;
        }
        const auto t0 = Clock::now();
        const auto maps = step_doubling(*ctx.model, norm, pairs.s0, T);
        const double cost = seconds_since(t0) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) emit(i, method::kStepDoubling, aggregate(maps[i]), cost);
      } else if (m == method::kEnsemble) {
        std::vector<train::Predictor*> members{ctx.model};
        members.insert(members.end(), ctx.ensemble.begin(), ctx.ensemble.end());
        const auto t0 = Clock::now();
        const auto s = ensemble_scores(members, norm, pairs.s0, T);
        const double cost = seconds_since(t0) / static_cast<double>(n);
        for (std::size_t i = 0; i < n; ++i) emit(i, method::kEnsemble, s[i], cost);
      } else if (m == method::kTta) {
        for (std::size_t i = 0; i < n; ++i) {
          Rng rng(derive_seed(ctx.seed, 0x747461ULL, split.seeds[pairs.traj[i]], static_cast<std::uint64_t>(T)));
          const auto t0 = Clock::now();
          const double s = tta_score(*ctx.model, norm, pairs.s0[i], T, ctx.tta, rng);
          emit(i, method::kTta, s, seconds_since(t0));
        }
      } else if (m == method::kGradMag) {
        if (ball) continue;
        for (std::size_t i = 0; i < n; ++i) {
          const auto t0 = Clock::now();
          const double s = grad_mag_score(pairs.s0[i], norm);
          emit(i, method::kGradMag, s, seconds_since(t0));
        }
      } else if (m == method::kErrorHead) {
        for (std::size_t i = 0; i < n; ++i) {
          const auto t0 = Clock::now();
          const double s = ctx.head->score(pairs.s0[i], T);
          emit(i, method::kErrorHead, s, seconds_since(t0));
        }
      } else if (m == method::kConformal) {
        for (std::size_t i = 0; i < n; ++i) {
          const auto t0 = Clock::now();
          const double s = ctx.conformal->score(ConformalScorer::features(pairs.s0[i], T, norm));
          emit(i, method::kConformal, s, seconds_since(t0));
        }
      } else if (m == method::kEnergy || m == method::kMomentum) {
        if (!ball) continue;
        for (std::size_t i = 0; i < n; ++i) {
          const auto& traj = split.trajectories[pairs.traj[i]];
          const double s = m == method::kEnergy
                               ? energy_residual(pairs.s0[i], pred[i], env::param_value(traj.params, "gravity"))
                               : momentum_residual(pairs.s0[i], pred[i]);
          emit(i, m == method::kEnergy ? method::kEnergy : method::kMomentum, s, 0.0);
        }
      } else if (m == method::kRichardsonFix || m == method::kRichardsonProd) {
        const auto v = m == method::kRichardsonFix ? RichardsonVariant::Fix : RichardsonVariant::Prod;
        for (std::size_t i = 0; i < n; ++i) {
          const auto params = train::trajectory_params(split.trajectories[pairs.traj[i]]);
          const auto r = richardson_score(params, pairs.s0[i], T, v, norm, ctx.richardson_order);
          emit(i, v == RichardsonVariant::Fix ? method::kRichardsonFix : method::kRichardsonProd, aggregate(r.map),
               r.cost_seconds);
        }
      }
    }
  }
  return rows;
}

}  // namespace hwm::trust
