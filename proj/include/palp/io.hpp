#pragma once

#include <filesystem>
#include <string>

namespace palp {

// Throw Error(Io) naming the path on failure.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, const std::string& text);

}  // namespace palp
