#pragma once

#include <string>
#include <string_view>

namespace flowcls {

/// Whole-file helpers; failures raise Error(io_error).
std::string read_text_file(const std::string& path);
void write_text_file(const std::string& path, std::string_view content);

}  // namespace flowcls
