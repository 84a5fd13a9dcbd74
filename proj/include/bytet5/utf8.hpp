#pragma once

#include <string>
#include <string_view>

namespace bytet5::utf8 {

// Decodes UTF-8 into scalar values. Ill-formed subsequences become U+FFFD,
// one replacement per maximal ill-formed subpart.
std::u32string decode(std::string_view bytes);

std::string encode(std::u32string_view codepoints);
void append(std::string& out, char32_t cp);

// Re-encodes `bytes` with every ill-formed subsequence replaced by U+FFFD.
std::string to_valid_lossy(std::string_view bytes);

bool is_valid(std::string_view bytes);

// Unicode White_Space property.
bool is_white_space(char32_t cp);

}  // namespace bytet5::utf8
