#pragma once

#include <array>
#include <cstddef>
#include <string>
#include <string_view>

namespace skysentry {

enum class Species : int { kKite = 0, kBird = 1, kAircraft = 2, kOther = 3 };

inline constexpr std::size_t kNumClasses = 4;
inline constexpr std::array<Species, kNumClasses> kAllSpecies = {
    Species::kKite, Species::kBird, Species::kAircraft, Species::kOther};

using ClassScores = std::array<double, kNumClasses>;

inline constexpr std::size_t index_of(Species s) { return static_cast<std::size_t>(s); }

std::string_view species_name(Species s);

/// Accepts "kite" / "Kite" / "KITE" etc; throws Error(kConfig) otherwise.
Species parse_species(std::string_view name);

inline ClassScores uniform_scores() { return {0.25, 0.25, 0.25, 0.25}; }

}  // namespace skysentry
