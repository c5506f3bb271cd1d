#ifndef TGATE_UNITS_HPP
#define TGATE_UNITS_HPP

#include <numbers>

// All frequencies are angular (rad/s), times in seconds, trap positions in
// micrometres. hbar = 1.
namespace tgate::units {

inline constexpr double pi = std::numbers::pi;
inline constexpr double two_pi = 2.0 * std::numbers::pi;

inline constexpr double elementary_charge = 1.602176634e-19;    // C
inline constexpr double vacuum_permittivity = 8.8541878128e-12;  // F/m
inline constexpr double atomic_mass = 1.66053906660e-27;        // kg
inline constexpr double calcium40_mass = 39.962590863 * atomic_mass;

inline constexpr double us = 1e-6;
inline constexpr double ns = 1e-9;

/// Cyclic kHz to angular frequency.
constexpr double khz(double f) {
    return two_pi * 1e3 * f;
}
constexpr double mhz(double f) {
    return two_pi * 1e6 * f;
}
constexpr double to_khz(double omega) {
    return omega / (two_pi * 1e3);
}
constexpr double to_mhz(double omega) {
    return omega / (two_pi * 1e6);
}

}  // namespace tgate::units

#endif  // TGATE_UNITS_HPP
