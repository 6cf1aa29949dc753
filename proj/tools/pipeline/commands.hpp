#pragma once

#include <filesystem>
#include <string>

#include "config.hpp"

namespace hwm::cli {

/// Output layout under the run directory. Every subdirectory holds the
/// resolved config and a version stamp next to its artifacts.
struct Layout {
  std::filesystem::path root;

  std::filesystem::path data() const { return root / "data"; }
  std::filesystem::path train() const { return root / "train"; }
  std::filesystem::path trust() const { return root / "trust"; }
  std::filesystem::path deploy() const { return root / "deploy"; }
  std::filesystem::path eval() const { return root / "eval"; }
  std::filesystem::path bench() const { return root / "bench"; }
  std::filesystem::path render() const { return root / "render"; }
  std::filesystem::path ablate() const { return root / "ablate"; }

  std::filesystem::path checkpoint() const { return train() / "model.ckpt"; }
  std::filesystem::path member(int k) const { return train() / ("member_" + std::to_string(k) + ".ckpt"); }
  std::filesystem::path trust_table(data::Split s) const { return trust() / ("trust_" + data::to_string(s) + ".csv"); }
};

/// Code version written next to every output.
std::string version_stamp();

/// Exclusive per-directory lock; a lock left by a dead process is taken over.
class DirLock {
 public:
  explicit DirLock(const std::filesystem::path& dir);
  ~DirLock();
  DirLock(const DirLock&) = delete;
  DirLock& operator=(const DirLock&) = delete;

 private:
  std::filesystem::path path_;
};

// Each command throws MissingPrerequisite, ConfigError, ValidationFailure or
// a runtime error; the caller maps them to exit codes.
void cmd_gen(const RunConfig& c, const Layout& out);
void cmd_train(const RunConfig& c, const Layout& out);
void cmd_trust(const RunConfig& c, const Layout& out);
void cmd_deploy(const RunConfig& c, const Layout& out);
void cmd_eval(const RunConfig& c, const Layout& out);
void cmd_bench(const RunConfig& c, const Layout& out);
void cmd_render(const RunConfig& c, const Layout& out);
void cmd_ablate(const RunConfig& c, const Layout& out);

/// Parses arguments, runs one subcommand and returns its exit code.
int run_cli(int argc, char** argv);

}  // namespace hwm::cli
