#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace cxrkit::text {

// Unicode-aware lowercase of UTF-8 text. Invalid byte sequences pass through unchanged.
std::string lower(std::string_view utf8);

std::string_view trim(std::string_view s);

// Splits on Unicode whitespace.
std::vector<std::string> split_whitespace(std::string_view utf8);

bool starts_with_bom(std::string_view s);

// 64-bit FNV-1a, used for fingerprints. Stable across platforms.
class Fnv1a {
public:
    Fnv1a& add(std::string_view bytes);
    Fnv1a& add_field(std::string_view bytes);  // length-prefixed, so field boundaries hash distinctly
    std::uint64_t value() const { return state_; }
    std::string hex() const;

private:
    std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

}  // namespace cxrkit::text
