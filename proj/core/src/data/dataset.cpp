#include "hwm/data/dataset.hpp"

#include <atomic>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <json.hpp>
#include <mutex>
#include <thread>

#include "hwm/data/io.hpp"
#include "hwm/util/binio.hpp"

namespace hwm::data {

using nlohmann::json;
namespace fs = std::filesystem;

std::string Manifest::to_json() const {
  json doc;
  doc["env"] = env::to_string(env);
  doc["split"] = data::to_string(split);
  doc["base_seed"] = base_seed;
  doc["frames"] = frames;
  json list = json::array();
  for (const auto& e : entries) {
    json params = json::array();
    for (const auto& [name, value] : e.params) params.push_back({name, value});
    json j{{"file", e.file}, {"seed", e.seed}, {"params", params}, {"status", e.ok ? "ok" : "failed"}, {"crc", e.crc}};
    if (!e.ok) j["error"] = e.error;
    list.push_back(std::move(j));
  }
  doc["trajectories"] = std::move(list);
  return doc.dump(1) + "\n";
}

Manifest Manifest::from_json(const std::string& text) {
  Manifest m;
  try {
    const json doc = json::parse(text);
    m.env = env::env_from_string(doc.at("env").get<std::string>());
    m.split = split_from_string(doc.at("split").get<std::string>());
    m.base_seed = doc.at("base_seed").get<std::uint64_t>();
    m.frames = doc.at("frames").get<int>();
    for (const auto& j : doc.at("trajectories")) {
      ManifestEntry e;
      e.file = j.at("file").get<std::string>();
      e.seed = j.at("seed").get<std::uint64_t>();
      for (const auto& p : j.at("params")) e.params.emplace_back(p.at(0).get<std::string>(), p.at(1).get<double>());
      e.ok = j.at("status").get<std::string>() == "ok";
      e.crc = j.at("crc").get<std::uint32_t>();
      if (j.contains("error")) e.error = j.at("error").get<std::string>();
      m.entries.push_back(std::move(e));
    }
  } catch (const json::exception& ex) {
    throw FormatError(FormatErrc::Malformed, std::string("manifest: ") + ex.what());
  }
  return m;
}

namespace {

std::string file_name(std::uint64_t seed) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "traj_%08llu.hwm", static_cast<unsigned long long>(seed));
  return buf;
}

std::uint32_t stored_crc(const std::vector<std::uint8_t>& bytes) {
  std::uint32_t crc = 0;
  if (bytes.size() >= 4) std::memcpy(&crc, bytes.data() + bytes.size() - 4, 4);
  return crc;
}

template <class Fn>
void parallel_for(std::size_t n, unsigned threads, Fn&& fn) {
  threads = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(std::max<std::size_t>(n, 1))));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr first_error;
  std::mutex err_mu;
  for (unsigned t = 0; t < threads; ++t) {
    pool.emplace_back([&] {
      for (std::size_t i; (i = next.fetch_add(1)) < n;) {
        try {
          fn(i);
        } catch (...) {
          std::lock_guard lock(err_mu);
          if (!first_error) first_error = std::current_exception();
        }
      }
    });
  }
  for (auto& th : pool) th.join();
  if (first_error) std::rethrow_exception(first_error);
}

}  // namespace

GenerateReport generate_split(const SplitSpec& spec, const fs::path& dir, unsigned threads) {
  validate(spec);
  fs::create_directories(dir);
  Manifest m;
  m.env = spec.env;
  m.split = spec.split;
  m.base_seed = spec.base_seed;
  m.frames = spec.frames;
  m.entries.resize(spec.count);
  std::vector<int> outcome(spec.count, 0);  // 0 generated, 1 skipped, 2 failed

  parallel_for(spec.count, threads, [&](std::size_t i) {
    const TrajectorySpec ts = sample_params(spec, i);
    ManifestEntry& e = m.entries[i];
    e.file = file_name(ts.seed);
    e.seed = ts.seed;
    e.params = ts.record;
    const fs::path path = dir / e.file;
    if (fs::exists(path)) {
      try {
        const auto bytes = read_file(path);
        const auto t = decode_trajectory(bytes, spec.env);
        if (t.params == ts.record && t.length() == static_cast<std::size_t>(spec.frames)) {
          e.ok = true;
          e.crc = stored_crc(bytes);
          outcome[i] = 1;
          return;
        }
      } catch (const FormatError&) {
        // Unreadable or stale: fall through and regenerate.
      }
    }
    try {
      const auto t = generate_trajectory(ts, spec.frames);
      e.crc = write_trajectory(t, path);
      e.ok = true;
    } catch (const env::SolverError& ex) {
      e.ok = false;
      e.error = ex.what();
      outcome[i] = 2;
      std::error_code ec;
      fs::remove(path, ec);
    }
  });

  write_text_atomic(dir / kManifestName, m.to_json());
  GenerateReport r;
  for (int o : outcome) (o == 0 ? r.generated : o == 1 ? r.skipped : r.failed) += 1;
  return r;
}

std::vector<GenerateReport> generate_dataset(const EnvDataConfig& cfg, const fs::path& root, unsigned threads) {
  validate_ladder(cfg.ladder);
  if (cfg.ladder.back() >= cfg.frames) {
    throw std::invalid_argument("largest horizon " + std::to_string(cfg.ladder.back()) +
                                " does not fit in trajectories of " + std::to_string(cfg.frames) + " frames");
  }
  std::vector<SplitSpec> specs;
  for (Split s : kAllSplits) specs.push_back(split_spec(cfg, s));
  check_disjoint(specs);
  std::vector<GenerateReport> out;
  for (const auto& s : specs) out.push_back(generate_split(s, root / to_string(s.split), threads));
  return out;
}

SplitData load_split(const fs::path& dir, env::EnvId expect) {
  const auto bytes = read_file(dir / kManifestName);
  const Manifest m = Manifest::from_json(std::string(bytes.begin(), bytes.end()));
  if (m.env != expect) {
    throw FormatError(FormatErrc::EnvMismatch,
                      dir.string() + " holds " + env::to_string(m.env) + " data, expected " + env::to_string(expect));
  }
  SplitData d;
  d.env = m.env;
  d.split = m.split;
  for (const auto& e : m.entries) {
    if (!e.ok) continue;
    const auto raw = read_file(dir / e.file);
    if (stored_crc(raw) != e.crc) {
      throw FormatError(FormatErrc::ChecksumMismatch, (dir / e.file).string() + ": CRC differs from the manifest");
    }
    d.trajectories.push_back(decode_trajectory(raw, expect));
    d.seeds.push_back(e.seed);
  }
  return d;
}

SplitData generate_in_memory(const SplitSpec& spec, unsigned threads) {
  validate(spec);
  std::vector<env::Trajectory> trajs(spec.count);
  std::vector<char> ok(spec.count, 0);
  std::vector<std::uint64_t> seeds(spec.count);
  parallel_for(spec.count, threads, [&](std::size_t i) {
    const auto ts = sample_params(spec, i);
    seeds[i] = ts.seed;
    try {
      trajs[i] = generate_trajectory(ts, spec.frames);
      ok[i] = 1;
    } catch (const env::SolverError&) {
    }
  });
  SplitData d;
  d.env = spec.env;
  d.split = spec.split;
  for (std::size_t i = 0; i < spec.count; ++i) {
    if (!ok[i]) continue;
    d.trajectories.push_back(std::move(trajs[i]));
    d.seeds.push_back(seeds[i]);
  }
  return d;
}

PairSampler::PairSampler(const std::vector<env::Trajectory>& trajs, std::vector<int> ladder)
    : trajs_(&trajs), ladder_(std::move(ladder)) {
  validate_ladder(ladder_);
  if (trajs.empty()) throw std::invalid_argument("pair sampler needs at least one trajectory");
  for (const auto& t : trajs) {
    if (static_cast<std::size_t>(ladder_.back()) >= t.length()) {
      throw std::invalid_argument("horizon " + std::to_string(ladder_.back()) + " does not fit in a trajectory of " +
                                  std::to_string(t.length()) + " frames");
    }
  }
}

PairIndex PairSampler::draw(Rng& rng) const {
  PairIndex p;
  p.traj = rng.below(trajs_->size());
  p.T = ladder_[rng.below(ladder_.size())];
  p.start = rng.below((*trajs_)[p.traj].length() - static_cast<std::size_t>(p.T));
  return p;
}

HorizonSample PairSampler::at(const PairIndex& idx) const {
  const auto& t = trajs_->at(idx.traj);
  if (idx.T < 1 || idx.start + static_cast<std::size_t>(idx.T) >= t.length()) {
    throw std::out_of_range("pair (start " + std::to_string(idx.start) + ", T " + std::to_string(idx.T) +
                            ") runs past a trajectory of " + std::to_string(t.length()) + " frames");
  }
  return {t.frames[idx.start], t.frames[idx.start + idx.T], idx.T, idx.traj, idx.start};
}

HorizonSample PairSampler::sample(Rng& rng) const { return at(draw(rng)); }

std::vector<HorizonSample> extract_pairs(const env::Trajectory& t, const std::vector<int>& ladder, Rng& rng,
                                         std::size_t count) {
  const std::vector<env::Trajectory> one{t};
  const PairSampler s(one, ladder);
  std::vector<HorizonSample> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(s.sample(rng));
  return out;
}

std::size_t eval_start(std::uint64_t base_seed, std::uint64_t traj_seed, int horizon, std::size_t length) {
  if (horizon < 1 || static_cast<std::size_t>(horizon) >= length) {
    throw std::invalid_argument("horizon " + std::to_string(horizon) + " does not fit in " + std::to_string(length) +
                                " frames");
  }
  Rng rng(derive_seed(base_seed, 0x65766131ULL, traj_seed, static_cast<std::uint64_t>(horizon)));
  return rng.below(length - static_cast<std::size_t>(horizon));
}

std::size_t state_channels(const env::State& s) { return s.rank() == 1 ? s.size() : s.dim(0); }

namespace {

template <class Fn>
env::State per_channel(const NormStats& st, const env::State& s, Fn&& fn) {
  const std::size_t c = state_channels(s);
  if (c != st.channels()) {
    throw std::invalid_argument("state has " + std::to_string(c) + " channels, stats have " +
                                std::to_string(st.channels()));
  }
  env::State out(s.shape());
  const std::size_t plane = s.size() / c;
  for (std::size_t ch = 0; ch < c; ++ch)
    for (std::size_t i = 0; i < plane; ++i) {
      const std::size_t k = ch * plane + i;
      out[k] = static_cast<float>(fn(static_cast<double>(s[k]), st.mean[ch], st.std[ch]));
    }
  return out;
}

}  // namespace

env::State NormStats::normalize(const env::State& s) const {
  return per_channel(*this, s, [](double x, double m, double sd) { return (x - m) / sd; });
}

env::State NormStats::denormalize(const env::State& z) const {
  return per_channel(*this, z, [](double x, double m, double sd) { return x * sd + m; });
}

env::State NormStats::scale(const env::State& z) const {
  return per_channel(*this, z, [](double x, double, double sd) { return x * sd; });
}

NormStats compute_norm_stats(const SplitData& train) {
  if (train.split != Split::Train) {
    throw std::invalid_argument("normalisation statistics come from the train split only, got " +
                                to_string(train.split));
  }
  if (train.trajectories.empty()) throw std::invalid_argument("train split is empty");
  const std::size_t c = state_channels(train.trajectories.front().frames.front());
  std::vector<double> sum(c, 0.0);
  std::vector<std::size_t> count(c, 0);
  for (const auto& t : train.trajectories)
    for (const auto& f : t.frames) {
      if (state_channels(f) != c) throw std::invalid_argument("train frames differ in channel count");
      const std::size_t plane = f.size() / c;
      for (std::size_t ch = 0; ch < c; ++ch) {
        for (std::size_t i = 0; i < plane; ++i) sum[ch] += f[ch * plane + i];
        count[ch] += plane;
      }
    }
  NormStats st;
  st.mean.resize(c);
  for (std::size_t ch = 0; ch < c; ++ch) st.mean[ch] = sum[ch] / static_cast<double>(count[ch]);
  std::vector<double> sq(c, 0.0);
  for (const auto& t : train.trajectories)
    for (const auto& f : t.frames) {
      const std::size_t plane = f.size() / c;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t i = 0; i < plane; ++i) {
          const double d = f[ch * plane + i] - st.mean[ch];
          sq[ch] += d * d;
        }
    }
  st.std.resize(c);
  for (std::size_t ch = 0; ch < c; ++ch) {
    st.std[ch] = std::sqrt(sq[ch] / static_cast<double>(count[ch]));
    if (!(st.std[ch] >= kStdFloor)) {
      st.warnings.push_back("channel " + std::to_string(ch) + " has std " + std::to_string(st.std[ch]) +
                            ", floored at 1e-6");
      st.std[ch] = kStdFloor;
    }
  }
  return st;
}

}  // namespace hwm::data
