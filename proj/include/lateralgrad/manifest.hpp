#pragma once

#include <string>
#include <vector>

namespace lateralgrad {

/// Run manifest: resolved config, content hashes of inputs and artifacts,
/// and timing. Everything time-dependent lives here so data artifacts stay
/// byte-reproducible.
class Manifest {
 public:
  Manifest(std::string subcommand);

  void add(const std::string& key, const std::string& value);
  void add_config(const std::vector<std::pair<std::string, std::string>>& resolved);
  void add_input_file(const std::string& label, const std::string& path);
  void add_artifact(const std::string& path);  // hashes the file as written

  void write(const std::string& path) const;

 private:
  std::vector<std::pair<std::string, std::string>> rows_;
};

}  // namespace lateralgrad
