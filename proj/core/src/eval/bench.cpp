#include "hwm/eval/bench.hpp"

#include <algorithm>
#include <chrono>
#include <stdexcept>

#include "hwm/util/binio.hpp"
#include "hwm/util/csv.hpp"

namespace hwm::eval {

namespace {

using Clock = std::chrono::steady_clock;

double time_loop(const std::function<void()>& fn, long count) {
  const auto t0 = Clock::now();
  for (long i = 0; i < count; ++i) fn();
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace

double median_seconds(const std::function<void()>& fn, const BenchOptions& opts, bool& escalated) {
  if (opts.repeats < 1) throw std::invalid_argument("benchmark needs at least one repeat");
  for (int i = 0; i < opts.warmup; ++i) fn();
  long inner = 1;
  // Grow the inner loop until one measurement clears the timer floor.
  while (time_loop(fn, inner) < opts.min_seconds && inner < (1L << 24)) {
    inner *= 2;
    escalated = true;
  }
  std::vector<double> t;
  for (int r = 0; r < opts.repeats; ++r) t.push_back(time_loop(fn, inner) / static_cast<double>(inner));
  std::sort(t.begin(), t.end());
  const std::size_t n = t.size();
  return n % 2 == 1 ? t[n / 2] : 0.5 * (t[n / 2 - 1] + t[n / 2]);
}

std::vector<BenchRecord> bench_walltime(train::Predictor& model, const env::EnvParams& solver,
                                        const std::vector<env::State>& states, const std::vector<int>& horizons,
                                        const BenchOptions& opts) {
  if (states.empty()) throw std::invalid_argument("benchmark needs at least one state");
  if (opts.threads < 1) throw std::invalid_argument("benchmark thread count must be positive");
  std::vector<BenchRecord> out;
  for (int T : horizons) {
    BenchRecord r;
    r.env = env::to_string(env::env_of(solver));
    r.horizon = T;
    r.batch_mode = states.size() == 1 ? "single" : "batch" + std::to_string(states.size());
    r.threads = opts.threads;
    r.repeats = opts.repeats;
    const std::vector<int> hs(states.size(), T);
    r.surrogate_seconds = median_seconds([&] { (void)model.predict(states, hs); }, opts, r.escalated);
    r.solver_seconds = median_seconds(
        [&] {
          for (const auto& s : states) (void)env::advance(solver, s, T);
        },
        opts, r.escalated);
    r.speedup = r.surrogate_seconds > 0.0 ? r.solver_seconds / r.surrogate_seconds : 0.0;
    out.push_back(r);
  }
  return out;
}

void validate(const BenchRecord& r) {
  if (r.threads < 1) throw std::invalid_argument("bench record lacks a thread count");
  if (r.repeats < 1) throw std::invalid_argument("bench record lacks a repeat count");
}

void write_bench_csv(const std::filesystem::path& path, const std::vector<BenchRecord>& records) {
  CsvTable t;
  t.header = {"env",     "horizon", "batch_mode", "surrogate_seconds", "solver_seconds", "speedup",
              "threads", "repeats", "escalated"};
  for (const auto& r : records) {
    validate(r);
    t.add({r.env, std::to_string(r.horizon), r.batch_mode, fmt_double(r.surrogate_seconds),
           fmt_double(r.solver_seconds), fmt_double(r.speedup), std::to_string(r.threads), std::to_string(r.repeats),
           r.escalated ? "1" : "0"});
  }
  write_csv(path, t);
}

std::vector<BenchRecord> read_bench_csv(const std::filesystem::path& path) {
  const auto t = read_csv(path);
  std::vector<BenchRecord> out;
  const std::size_t ce = t.column("env"), ch = t.column("horizon"), cb = t.column("batch_mode"),
                    csu = t.column("surrogate_seconds"), cso = t.column("solver_seconds"), csp = t.column("speedup"),
                    ct = t.column("threads"), cr = t.column("repeats"), cx = t.column("escalated");
  for (const auto& row : t.rows) {
    BenchRecord r;
    try {
      r = {row[ce],
           std::stoi(row[ch]),
           row[cb],
           std::stod(row[csu]),
           std::stod(row[cso]),
           std::stod(row[csp]),
           row[ct].empty() ? 0 : std::stoi(row[ct]),
           row[cr].empty() ? 0 : std::stoi(row[cr]),
           row[cx] == "1"};
    } catch (const std::exception& e) {
      throw FormatError(FormatErrc::Malformed, path.string() + ": " + e.what());
    }
    validate(r);
    out.push_back(r);
  }
  return out;
}

}  // namespace hwm::eval
