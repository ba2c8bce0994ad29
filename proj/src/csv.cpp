#include "lateralgrad/csv.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "lateralgrad/errors.hpp"

namespace lateralgrad {

std::string csv_format(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

std::string csv_format(int64_t v) { return std::to_string(v); }

CsvWriter::CsvWriter(std::vector<std::string> columns) : columns_(std::move(columns)) {}

void CsvWriter::add_row(std::vector<std::string> cells) {
  if (cells.size() != columns_.size())
    throw UsageError("CSV row has " + std::to_string(cells.size()) + " cells, header has " +
                     std::to_string(columns_.size()));
  rows_.push_back(std::move(cells));
  dirty_ = true;
}

const std::string& CsvWriter::text() {
  if (dirty_) {
    cache_.clear();
    for (size_t i = 0; i < columns_.size(); ++i) {
      if (i) cache_ += ',';
      cache_ += columns_[i];
    }
    cache_ += '\n';
    for (const auto& row : rows_) {
      for (size_t i = 0; i < row.size(); ++i) {
        if (i) cache_ += ',';
        cache_ += row[i];
      }
      cache_ += '\n';
    }
    dirty_ = false;
  }
  return cache_;
}

void CsvWriter::write(const std::string& path) { write_file_atomic(path, text()); }

void write_file_atomic(const std::string& path, const std::string& contents) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open " + tmp + " for writing");
    f.write(contents.data(), static_cast<std::streamsize>(contents.size()));
    if (!f) throw IoError("short write to " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace lateralgrad
