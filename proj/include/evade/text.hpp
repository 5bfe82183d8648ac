#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace evade::text {

std::string trim(std::string_view s);
bool is_blank(std::string_view s);
std::string to_lower_ascii(std::string_view s);

std::vector<std::string> split_whitespace(std::string_view s);

// Runs of whitespace collapsed to one space, ends trimmed.
std::string normalize_whitespace(std::string_view s);

// Lenient UTF-8 decode; invalid sequences become U+FFFD.
std::u32string decode_utf8(std::string_view s);

}  // namespace evade::text
