#pragma once

#include <map>
#include <string>

#include "miml/data.hpp"
#include "miml/training.hpp"

namespace miml {

// Flat key = value configuration behind the CLI. Every key has a default, an
// unknown key is rejected, and the fully resolved table is written into each
// run directory so the run can be reproduced from the snapshot alone.
class RunConfig {
 public:
  RunConfig();

  // "key = value" lines; '#' starts a comment
  void load_file(const std::string& path);
  void set(const std::string& key, const std::string& value);

  const std::string& get(const std::string& key) const;
  double get_double(const std::string& key) const;
  std::uint64_t get_u64(const std::string& key) const;
  std::size_t get_size(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  std::string snapshot() const;  // sorted, resolved, byte-stable

  TrainConfig train_config() const;
  SynthConfig synth_config() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace miml
