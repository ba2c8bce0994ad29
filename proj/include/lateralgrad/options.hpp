#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

namespace lateralgrad {

/// Uniform key=value option layer shared by config files and CLI flags.
/// Every option is declared up front with a default; a config file supplies
/// `key=value` lines (UTF-8, '#' comments, blank lines ignored) and flags
/// spell the same keys as `--key value` or `--key=value`. Unknown keys fail
/// with the list of valid ones; when a key appears in both places the flag
/// wins and a warning is emitted.
class OptionSet {
 public:
  using WarnFn = std::function<void(const std::string&)>;

  void define(const std::string& key, const std::string& default_value, const std::string& help);

  /// Parses flags; a bare `--config <path>` names the config file.
  void parse_flags(const std::vector<std::string>& args);
  void load_config_file(const std::string& path);

  /// Applies config-under-flags precedence. Call after both inputs are in.
  void finalize(const WarnFn& warn);

  bool was_set(const std::string& key) const;  // by flag or config
  std::string str(const std::string& key) const;
  double num(const std::string& key) const;
  int64_t integer(const std::string& key) const;
  bool flag(const std::string& key) const;  // "true"/"1"/"yes" vs "false"/"0"/"no"
  std::vector<double> num_list(const std::string& key) const;  // comma separated

  /// Resolved (key, value) pairs in sorted key order, for manifests.
  std::vector<std::pair<std::string, std::string>> resolved() const;

  std::string config_path() const { return config_path_; }
  std::string help_text() const;

 private:
  struct Entry {
    std::string value;
    std::string help;
    bool from_flag = false;
    bool from_config = false;
    std::string config_value;
  };
  [[noreturn]] void unknown_key(const std::string& key, const std::string& where) const;
  Entry& entry(const std::string& key);
  const Entry& entry(const std::string& key) const;

  std::map<std::string, Entry> entries_;
  std::string config_path_;
};

}  // namespace lateralgrad
