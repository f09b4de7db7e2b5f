#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace dte {

// Rounds to 4 significant digits, e.g. 0.8 -> 0.8, 1.2749 -> 1.275,
// 52345.5 -> 52350.
double round_sig4(double value);

// Fixed notation with 4 significant digits and no trailing zeros.
std::string format_sig4(double value);

// Shortest representation that parses back to the same double.
std::string format_exact(double value);

// "0.8cm", "1200 bytes": short alphabetic units attach directly.
std::string with_unit(const std::string& number, const std::optional<std::string>& unit);

// 64-bit FNV-1a; stable across platforms, used for seeding and content hashes.
unsigned long long fnv1a(std::string_view bytes,
                         unsigned long long basis = 14695981039346656037ULL);

}  // namespace dte
