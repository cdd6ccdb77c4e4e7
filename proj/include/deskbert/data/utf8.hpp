#pragma once

#include <string>
#include <string_view>

namespace deskbert::data {

// Strict UTF-8 decoding; throws UserError on malformed input.
std::u32string decode_utf8(std::string_view bytes);
std::string encode_utf8(char32_t cp);
std::string encode_utf8(std::u32string_view cps);

bool is_space(char32_t cp);

}  // namespace deskbert::data
