#include "hwm/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <tuple>

#include "hwm/util/binio.hpp"
#include "hwm/util/csv.hpp"
#include "hwm/util/rng.hpp"

namespace hwm::eval {

namespace {

std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace

double auroc(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw std::invalid_argument("auroc: scores and labels differ in length");
  const std::size_t n = scores.size();
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });
  // Midranks doubled so every quantity stays an integer.
  double rank2_pos = 0.0;
  std::size_t pos = 0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    while (j < n && scores[idx[j]] == scores[idx[i]]) ++j;
    const double mid2 = static_cast<double>(i + 1 + j);  // 2 * mean of ranks i+1..j
    for (std::size_t k = i; k < j; ++k) {
      if (labels[idx[k]] != 0) {
        rank2_pos += mid2;
        ++pos;
      }
    }
    i = j;
  }
  const std::size_t neg = n - pos;
  if (pos == 0 || neg == 0) throw Undefined("auroc needs both classes");
  const double p = static_cast<double>(pos);
  const double u2 = rank2_pos - p * (p + 1.0);
  return u2 / (2.0 * p * static_cast<double>(neg));
}

double nearest_rank(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("nearest_rank of an empty list");
  std::sort(values.begin(), values.end());
  const auto n = static_cast<long long>(values.size());
  long long i = static_cast<long long>(std::ceil(p * static_cast<double>(n))) - 1;
  i = std::clamp(i, 0LL, n - 1);
  return values[static_cast<std::size_t>(i)];
}

Labels label_by_percentile(const std::vector<double>& errors, double pct) {
  if (errors.size() < 4) throw std::invalid_argument("labelling needs at least 4 samples");
  if (!(pct >= 0.0 && pct <= 100.0)) throw std::invalid_argument("percentile must lie in [0, 100]");
  Labels out;
  out.threshold = nearest_rank(errors, pct / 100.0);
  out.y.resize(errors.size());
  for (std::size_t i = 0; i < errors.size(); ++i) out.y[i] = errors[i] > out.threshold ? 1 : 0;
  const auto [lo, hi] = std::minmax_element(errors.begin(), errors.end());
  out.degenerate = *lo == *hi;
  return out;
}

Interval bootstrap_ci(const std::vector<double>& scores, const std::vector<int>& labels, int resamples, double level,
                      std::uint64_t seed) {
  if (resamples < 1) throw std::invalid_argument("bootstrap needs at least one resample");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("confidence level must lie in (0, 1)");
  const double point = auroc(scores, labels);
  const std::size_t n = scores.size();
  Rng rng(derive_seed(seed, 0x626f6f74ULL));
  std::vector<double> stats;
  stats.reserve(static_cast<std::size_t>(resamples));
  std::vector<double> s(n);
  std::vector<int> y(n);
  Interval out;
  for (int r = 0; r < resamples; ++r) {
    for (std::size_t i = 0; i < n; ++i) {
      const auto k = static_cast<std::size_t>(rng.below(n));
      s[i] = scores[k];
      y[i] = labels[k];
    }
    try {
      stats.push_back(auroc(s, y));
    } catch (const Undefined&) {
      ++out.skipped;
    }
  }
  if (stats.empty()) throw Undefined("every bootstrap resample drew a single class");
  const double alpha = 1.0 - level;
  out.lo = std::min(nearest_rank(stats, alpha / 2.0), point);
  out.hi = std::max(nearest_rank(stats, 1.0 - alpha / 2.0), point);
  return out;
}

std::uint64_t cell_seed(std::uint64_t base, data::Split split, int horizon, const std::string& method) {
  return derive_seed(base, static_cast<std::uint64_t>(split), static_cast<std::uint64_t>(horizon), fnv1a(method));
}

std::vector<EvalCell> eval_cells(const std::string& env, const std::vector<trust::TrustRow>& rows,
                                 const CellOptions& opts) {
  using Key = std::tuple<data::Split, int, std::string>;
  std::map<Key, std::size_t> index;
  std::vector<Key> order;
  std::vector<std::vector<const trust::TrustRow*>> groups;
  for (const auto& r : rows) {
    const Key k{r.split, r.horizon, r.method};
    auto [it, fresh] = index.emplace(k, groups.size());
    if (fresh) {
      order.push_back(k);
      groups.emplace_back();
    }
    groups[it->second].push_back(&r);
  }
  std::vector<EvalCell> cells;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    std::vector<double> scores, errors;
    for (const auto* r : groups[g]) {
      scores.push_back(r->score);
      errors.push_back(r->true_rmse);
    }
    if (errors.size() < 4) continue;
    const auto labels = label_by_percentile(errors, opts.pct);
    if (labels.degenerate) continue;
    EvalCell c;
    c.env = env;
    std::tie(c.split, c.horizon, c.method) = order[g];
    try {
      c.auroc = auroc(scores, labels.y);
      const auto ci = bootstrap_ci(scores, labels.y, opts.resamples, opts.level,
                                   cell_seed(opts.seed, c.split, c.horizon, c.method));
      c.ci_lo = ci.lo;
      c.ci_hi = ci.hi;
    } catch (const Undefined&) {
      continue;
    }
    c.n = scores.size();
    cells.push_back(std::move(c));
  }
  return cells;
}

void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalCell>& cells) {
  CsvTable t;
  t.header = {"env", "split", "horizon", "method", "auroc", "ci_lo", "ci_hi", "n"};
  for (const auto& c : cells) {
    t.add({c.env, data::to_string(c.split), std::to_string(c.horizon), c.method, fmt_double(c.auroc),
           fmt_double(c.ci_lo), fmt_double(c.ci_hi), std::to_string(c.n)});
  }
  write_csv(path, t);
}

std::vector<EvalCell> read_eval_csv(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  const std::size_t ce = t.column("env"), cs = t.column("split"), ch = t.column("horizon"), cm = t.column("method"),
                    ca = t.column("auroc"), cl = t.column("ci_lo"), cu = t.column("ci_hi"), cn = t.column("n");
  std::vector<EvalCell> out;
  try {
    for (const auto& r : t.rows) {
      out.push_back({r[ce], data::split_from_string(r[cs]), std::stoi(r[ch]), r[cm], std::stod(r[ca]),
                     std::stod(r[cl]), std::stod(r[cu]), static_cast<std::size_t>(std::stoull(r[cn]))});
    }
  } catch (const std::exception& e) {
    throw FormatError(FormatErrc::Malformed, path.string() + ": " + e.what());
  }
  return out;
}

}  // namespace hwm::eval
