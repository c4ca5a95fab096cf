#pragma once

#include <array>
#include <optional>
#include <string_view>

namespace trapspec::constants {

inline constexpr double pi = 3.14159265358979323846;
inline constexpr double hbar = 1.054571817e-34;    // J s
inline constexpr double planck = 6.62607015e-34;   // J s
inline constexpr double bohr_radius = 5.29177210903e-11; // m
inline constexpr double atomic_mass_unit = 1.66053906660e-27; // kg

struct AtomPreset {
    std::string_view name;
    double mass_kg;
};

// Isotope masses: 132.905452 u and 86.909180 u.
inline constexpr std::array<AtomPreset, 2> atom_presets{{
    {"Cs133", 2.20695e-25},
    {"Rb87", 1.44316e-25},
}};

/// Mass of a named atom preset ("Cs133", "133Cs", "cs", "Rb87", ...).
inline std::optional<double> atom_mass(std::string_view name) {
    auto lower = [](char c) { return (c >= 'A' && c <= 'Z') ? char(c - 'A' + 'a') : c; };
    auto equals = [&](std::string_view a, std::string_view b) {
        if (a.size() != b.size()) return false;
        for (std::size_t i = 0; i < a.size(); ++i)
            if (lower(a[i]) != lower(b[i])) return false;
        return true;
    };
    for (std::string_view alias : {"Cs133", "133Cs", "Cs", "cesium", "caesium"})
        if (equals(name, alias)) return atom_presets[0].mass_kg;
    for (std::string_view alias : {"Rb87", "87Rb", "Rb", "rubidium"})
        if (equals(name, alias)) return atom_presets[1].mass_kg;
    return std::nullopt;
}

} // namespace trapspec::constants
