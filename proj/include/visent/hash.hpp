#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace visent {

// SHA-1 digest as lowercase hex.
std::string sha1_hex(const uint8_t* data, size_t len);
std::string sha1_hex(const std::string& data);

// Git blob hash: sha1("blob <len>\0" + content).
std::string git_blob_sha1(const std::string& content);
std::string git_blob_sha1_file(const std::string& path);

}  // namespace visent
