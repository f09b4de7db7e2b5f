#include "dte/format.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <string_view>

namespace dte {
namespace {

int decimal_exponent(double value) {
  return static_cast<int>(std::floor(std::log10(std::fabs(value))));
}

// Removes trailing zeros (and a dangling point) from a fixed-notation number.
std::string trim_zeros(std::string s) {
  if (s.find('.') == std::string::npos) return s;
  while (!s.empty() && s.back() == '0') s.pop_back();
  if (!s.empty() && s.back() == '.') s.pop_back();
  if (s == "-0") s = "0";
  return s;
}

}  // namespace

double round_sig4(double value) {
  if (value == 0.0 || !std::isfinite(value)) return value;
  // Going through the decimal string keeps the result identical to what
  // format_sig4 prints.
  const std::string text = format_sig4(value);
  double out = 0.0;
  std::from_chars(text.data(), text.data() + text.size(), out);
  return out;
}

std::string format_sig4(double value) {
  if (!std::isfinite(value)) return fmt::format("{}", value);
  if (value == 0.0) return "0";
  int exponent = decimal_exponent(value);
  int decimals = 3 - exponent;
  if (decimals >= 0) {
    std::string s = fmt::format("{:.{}f}", value, decimals);
    // Rounding may carry into a new leading digit (9.9996 -> 10.000).
    double parsed = 0.0;
    std::from_chars(s.data(), s.data() + s.size(), parsed);
    if (parsed != 0.0 && decimal_exponent(parsed) != exponent && decimals > 0) {
      s = fmt::format("{:.{}f}", value, decimals - 1);
    }
    return trim_zeros(std::move(s));
  }
  const double scale = std::pow(10.0, -decimals);
  return fmt::format("{:.0f}", std::round(value / scale) * scale);
}

std::string format_exact(double value) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), value);
  return std::string(buf, end);
}

std::string with_unit(const std::string& number, const std::optional<std::string>& unit) {
  if (!unit || unit->empty()) return number;
  const bool compact = unit->size() <= 2 &&
                       std::all_of(unit->begin(), unit->end(),
                                   [](unsigned char c) { return std::isalpha(c) != 0; });
  return compact ? number + *unit : number + " " + *unit;
}

unsigned long long fnv1a(std::string_view bytes, unsigned long long basis) {
  unsigned long long h = basis;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

}  // namespace dte
