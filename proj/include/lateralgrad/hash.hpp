#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace lateralgrad {

std::string sha1_hex(const uint8_t* data, size_t len);
std::string sha1_hex(const std::string& s);

/// git blob hash: sha1("blob <len>\0" + content).
std::string git_blob_hash(const std::string& content);
std::string git_blob_hash_file(const std::string& path);

}  // namespace lateralgrad
