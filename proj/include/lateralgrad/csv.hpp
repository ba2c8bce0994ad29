#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lateralgrad {

/// Deterministic double formatting for CSV cells: %.12g, so equal doubles
/// always produce equal bytes.
std::string csv_format(double v);
std::string csv_format(int64_t v);

/// Header + rows, written atomically (temp file then rename).
class CsvWriter {
 public:
  explicit CsvWriter(std::vector<std::string> columns);

  void add_row(std::vector<std::string> cells);
  const std::string& text();  // full serialized document

  void write(const std::string& path);

 private:
  std::vector<std::string> columns_;
  std::vector<std::vector<std::string>> rows_;
  std::string cache_;
  bool dirty_ = true;
};

/// Whole-file atomic write used for every artifact.
void write_file_atomic(const std::string& path, const std::string& contents);

}  // namespace lateralgrad
