#pragma once

namespace vle {

/// Molar gas constant, J/(mol K) (CODATA 2018, exact).
inline constexpr double gas_constant = 8.314462618;

inline constexpr double pa_per_bar = 1.0e5;

constexpr double bar_to_pa(double bar) { return bar * pa_per_bar; }
constexpr double pa_to_bar(double pa) { return pa / pa_per_bar; }

} // namespace vle
