#include "lateralgrad/manifest.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>

#include "lateralgrad/csv.hpp"
#include "lateralgrad/hash.hpp"

namespace lateralgrad {

Manifest::Manifest(std::string subcommand) {
  rows_.emplace_back("subcommand", std::move(subcommand));
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  char buf[32];
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  // the one intentionally non-reproducible field
  rows_.emplace_back("generated_at", buf);
}

void Manifest::add(const std::string& key, const std::string& value) {
  rows_.emplace_back(key, value);
}

void Manifest::add_config(const std::vector<std::pair<std::string, std::string>>& resolved) {
  for (const auto& [k, v] : resolved) rows_.emplace_back("config." + k, v);
}

void Manifest::add_input_file(const std::string& label, const std::string& path) {
  rows_.emplace_back("input." + label + ".path", path);
  rows_.emplace_back("input." + label + ".sha1", git_blob_hash_file(path));
}

void Manifest::add_artifact(const std::string& path) {
  rows_.emplace_back("artifact." + std::filesystem::path(path).filename().string() + ".sha1",
                     git_blob_hash_file(path));
}

void Manifest::write(const std::string& path) const {
  std::string out;
  for (const auto& [k, v] : rows_) out += k + "=" + v + "\n";
  write_file_atomic(path, out);
}

}  // namespace lateralgrad
