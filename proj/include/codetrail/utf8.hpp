#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>

namespace codetrail::utf8 {

// Decodes UTF-8 into Unicode scalar values. Returns nullopt on malformed
// input (overlongs, surrogates, truncated sequences).
std::optional<std::u32string> decode(std::string_view bytes);

// Throws Error(SchemaViolation) naming `where` on malformed input.
std::u32string decode_or_throw(std::string_view bytes, std::string_view where);

std::string encode(std::u32string_view text);

// Number of scalar values; input assumed valid.
std::size_t length(std::string_view bytes);

bool is_valid(std::string_view bytes);

}  // namespace codetrail::utf8
