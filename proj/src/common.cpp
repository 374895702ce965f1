#include <algorithm>
#include <cctype>
#include <cmath>
#include <numbers>
#include <string>

#include "skysentry/error.hpp"
#include "skysentry/random.hpp"
#include "skysentry/species.hpp"

namespace skysentry {

std::string_view errc_name(Errc code) {
  switch (code) {
    case Errc::kInvalidArgument: return "InvalidArgument";
    case Errc::kBehindCamera: return "BehindCamera";
    case Errc::kDegenerateDisparity: return "DegenerateDisparity";
    case Errc::kOutOfDomain: return "OutOfDomain";
    case Errc::kSingularFit: return "SingularFit";
    case Errc::kOutOfRange: return "OutOfRange";
    case Errc::kUnknownCamera: return "UnknownCamera";
    case Errc::kDimensionMismatch: return "DimensionMismatch";
    case Errc::kNumericalFailure: return "NumericalFailure";
    case Errc::kDegenerateLikelihood: return "DegenerateLikelihood";
    case Errc::kMismatchedRun: return "MismatchedRun";
    case Errc::kConfig: return "ConfigError";
    case Errc::kIo: return "IoError";
  }
  return "Unknown";
}

std::string_view species_name(Species s) {
  switch (s) {
    case Species::kKite: return "kite";
    case Species::kBird: return "bird";
    case Species::kAircraft: return "aircraft";
    case Species::kOther: return "other";
  }
  return "other";
}

Species parse_species(std::string_view name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  for (Species s : kAllSpecies) {
    if (species_name(s) == lower) return s;
  }
  throw Error(Errc::kConfig, "unknown species '" + std::string(name) + "'");
}

double SplitMix64::normal() {
  // 1 - uniform() lies in (0, 1], keeping log finite.
  const double u1 = 1.0 - uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
}

std::uint64_t stream_key(std::initializer_list<std::uint64_t> parts) {
  std::uint64_t key = 0x6A09E667F3BCC909ULL;
  for (std::uint64_t p : parts) {
    SplitMix64 mix(key ^ (p + 0x9E3779B97F4A7C15ULL + (key << 6) + (key >> 2)));
    key = mix.next();
  }
  return key;
}

}  // namespace skysentry
