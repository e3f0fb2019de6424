#pragma once

#include <string>

namespace cladecast {

// Write via a sibling temp file + rename so readers never observe partial
// content and interrupted runs leave prior artifacts intact.
void atomic_write_file(const std::string& path, const std::string& content);

std::string read_file(const std::string& path);
bool file_exists(const std::string& path);
void ensure_parent_dir(const std::string& path);

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

}  // namespace cladecast
