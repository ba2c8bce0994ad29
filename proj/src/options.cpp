#include "lateralgrad/options.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "lateralgrad/errors.hpp"

namespace lateralgrad {

namespace {

std::string trim(const std::string& s) {
  const auto lo = s.find_first_not_of(" \t\r\n");
  if (lo == std::string::npos) return "";
  const auto hi = s.find_last_not_of(" \t\r\n");
  return s.substr(lo, hi - lo + 1);
}

}  // namespace

void OptionSet::define(const std::string& key, const std::string& default_value,
                       const std::string& help) {
  Entry e;
  e.value = default_value;
  e.help = help;
  entries_[key] = std::move(e);
}

OptionSet::Entry& OptionSet::entry(const std::string& key) {
  auto it = entries_.find(key);
  if (it == entries_.end()) unknown_key(key, "option");
  return it->second;
}

const OptionSet::Entry& OptionSet::entry(const std::string& key) const {
  auto it = entries_.find(key);
  if (it == entries_.end()) unknown_key(key, "option");
  return it->second;
}

void OptionSet::unknown_key(const std::string& key, const std::string& where) const {
  std::ostringstream os;
  os << "unknown " << where << " '" << key << "'. Valid keys:";
  for (const auto& [k, e] : entries_) os << "\n  " << k << "  (" << e.help << ")";
  throw ConfigError(os.str());
}

void OptionSet::parse_flags(const std::vector<std::string>& args) {
  for (size_t i = 0; i < args.size(); ++i) {
    const std::string& a = args[i];
    if (a.rfind("--", 0) != 0)
      throw ConfigError("expected --key, got '" + a + "'");
    std::string key = a.substr(2);
    std::string value;
    bool have_value = false;
    const auto eq = key.find('=');
    if (eq != std::string::npos) {
      value = key.substr(eq + 1);
      key = key.substr(0, eq);
      have_value = true;
    }
    if (key == "config") {
      if (!have_value) {
        if (i + 1 >= args.size()) throw ConfigError("--config needs a path");
        value = args[++i];
      }
      config_path_ = value;
      continue;
    }
    auto it = entries_.find(key);
    if (it == entries_.end()) unknown_key(key, "flag");
    if (!have_value) {
      if (i + 1 >= args.size()) throw ConfigError("flag --" + key + " needs a value");
      value = args[++i];
    }
    it->second.value = value;
    it->second.from_flag = true;
  }
}

void OptionSet::load_config_file(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw IoError("cannot open config file " + path);
  std::string line;
  int line_no = 0;
  while (std::getline(f, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected key=value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    auto it = entries_.find(key);
    if (it == entries_.end()) unknown_key(key, "config key");
    it->second.from_config = true;
    it->second.config_value = value;
  }
}

void OptionSet::finalize(const WarnFn& warn) {
  if (!config_path_.empty()) load_config_file(config_path_);
  for (auto& [key, e] : entries_) {
    if (!e.from_config) continue;
    if (e.from_flag) {
      if (warn && e.config_value != e.value)
        warn("config sets " + key + "=" + e.config_value + " but flag overrides it with '" +
             e.value + "'");
    } else {
      e.value = e.config_value;
    }
  }
}

bool OptionSet::was_set(const std::string& key) const {
  const Entry& e = entry(key);
  return e.from_flag || e.from_config;
}

std::string OptionSet::str(const std::string& key) const { return entry(key).value; }

double OptionSet::num(const std::string& key) const {
  const std::string& v = entry(key).value;
  try {
    size_t used = 0;
    const double d = std::stod(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("option " + key + " expects a number, got '" + v + "'");
  }
}

int64_t OptionSet::integer(const std::string& key) const {
  const std::string& v = entry(key).value;
  try {
    size_t used = 0;
    const long long d = std::stoll(v, &used);
    if (used != v.size()) throw std::invalid_argument(v);
    return d;
  } catch (const std::exception&) {
    throw ConfigError("option " + key + " expects an integer, got '" + v + "'");
  }
}

bool OptionSet::flag(const std::string& key) const {
  std::string v = entry(key).value;
  std::transform(v.begin(), v.end(), v.begin(), [](unsigned char c) { return std::tolower(c); });
  if (v == "true" || v == "1" || v == "yes" || v == "on") return true;
  if (v == "false" || v == "0" || v == "no" || v == "off") return false;
  throw ConfigError("option " + key + " expects a boolean, got '" + v + "'");
}

std::vector<double> OptionSet::num_list(const std::string& key) const {
  const std::string v = entry(key).value;
  std::vector<double> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (item.empty()) continue;
    // accept small rationals like 2/255
    const auto slash = item.find('/');
    try {
      if (slash != std::string::npos)
        out.push_back(std::stod(item.substr(0, slash)) / std::stod(item.substr(slash + 1)));
      else
        out.push_back(std::stod(item));
    } catch (const std::exception&) {
      throw ConfigError("option " + key + " has a malformed number '" + item + "'");
    }
  }
  return out;
}

std::vector<std::pair<std::string, std::string>> OptionSet::resolved() const {
  std::vector<std::pair<std::string, std::string>> out;
  for (const auto& [k, e] : entries_) out.emplace_back(k, e.value);
  return out;
}

std::string OptionSet::help_text() const {
  std::ostringstream os;
  for (const auto& [k, e] : entries_)
    os << "  --" << k << " <value>  " << e.help << " (default: " << (e.value.empty() ? "<empty>" : e.value)
       << ")\n";
  return os.str();
}

}  // namespace lateralgrad
