#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "hwm/trust/table.hpp"

namespace hwm::eval {

/// AUROC is not defined (one class only, degenerate labels).
class Undefined : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Normalised Mann-Whitney U; ties count one half. Throws Undefined when a class is missing.
double auroc(const std::vector<double>& scores, const std::vector<int>& labels);

/// Nearest-rank quantile: element ceil(p n) - 1 (clamped) of the ascending sort.
double nearest_rank(std::vector<double> values, double p);

struct Labels {
  std::vector<int> y;
  double threshold = 0.0;
  /// All errors equal, so every label is 0.
  bool degenerate = false;
};

/// label = error > nearest-rank pct quantile. Needs at least 4 samples.
Labels label_by_percentile(const std::vector<double>& errors, double pct = 75.0);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  /// Resamples dropped because they drew a single class.
  int skipped = 0;
};

/// Percentile bootstrap over items, deterministic in `seed`.
Interval bootstrap_ci(const std::vector<double>& scores, const std::vector<int>& labels, int resamples = 1000,
                      double level = 0.95, std::uint64_t seed = 0);

struct EvalCell {
  std::string env;
  data::Split split = data::Split::Test;
  int horizon = 0;
  std::string method;
  double auroc = 0.0;
  double ci_lo = 0.0;
  double ci_hi = 0.0;
  std::size_t n = 0;
};

struct CellOptions {
  double pct = 75.0;
  int resamples = 1000;
  double level = 0.95;
  std::uint64_t seed = 0;
};

/// Bootstrap seed of a cell; depends only on the cell's key.
std::uint64_t cell_seed(std::uint64_t base, data::Split split, int horizon, const std::string& method);

/// One cell per (split, horizon, method) group of the table, in first-seen
/// order. Groups whose labels are degenerate are skipped.
std::vector<EvalCell> eval_cells(const std::string& env, const std::vector<trust::TrustRow>& rows,
                                 const CellOptions& opts);

void write_eval_csv(const std::filesystem::path& path, const std::vector<EvalCell>& cells);
std::vector<EvalCell> read_eval_csv(const std::filesystem::path& path);

}  // namespace hwm::eval
