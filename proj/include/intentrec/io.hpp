#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace intentrec {

std::string read_file(const std::string& path);
void write_file(const std::string& path, const std::string& content);

// FNV-1a over raw bytes; used for artifact hashes in manifests and for
// cheap content comparisons, not for anything security-related.
std::uint64_t fnv1a64(std::string_view bytes);
std::string fnv1a64_hex(std::string_view bytes);
std::string file_hash(const std::string& path);

}  // namespace intentrec
