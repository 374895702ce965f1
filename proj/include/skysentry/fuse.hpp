#pragma once

#include <array>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>

#include <nlohmann/json_fwd.hpp>

#include "skysentry/species.hpp"

namespace skysentry {

inline constexpr double kPosteriorFloor = 1e-6;

struct ClassPosterior {
  ClassScores p = uniform_scores();

  static ClassPosterior uniform() { return {}; }
  double operator[](Species s) const { return p[index_of(s)]; }
  Species argmax() const;
};

using Likelihood = std::array<double, kNumClasses>;
using ConfusionMatrix = std::array<std::array<double, kNumClasses>, kNumClasses>;  // [true][reported]

/// Classifier confusion that degrades from `near` (diag >= d_near) to `far`
/// (diag <= d_far), linearly in between.
struct ConfusionModel {
  ConfusionMatrix near{};
  ConfusionMatrix far{};
  double d_near = 6.0;
  double d_far = 3.0;

  /// Rows sum to 1, entries in [0, 1], near diagonal >= far diagonal, d_far < d_near.
  void validate() const;
  ConfusionMatrix effective(double diag_px) const;

  static ConfusionMatrix symmetric(double accuracy);
  static ConfusionModel identity();
  static ConfusionModel defaults();  // near 0.982 symmetric, far 0.80 symmetric
};

ConfusionModel confusion_from_json(const nlohmann::json& j);
nlohmann::json confusion_to_json(const ConfusionModel& m);
ConfusionModel load_confusion(const std::string& path);

enum class LikelihoodMode {
  kConfusionColumn,  // column of the effective confusion matrix for the reported class
  kOneHot,           // hard label
};

/// Stand-in for a per-frame CNN: samples a reported class from the confusion
/// row of `truth` and returns the likelihood vector for that report.
Likelihood synthetic_classify(Species truth, double diag_px, const ConfusionModel& model, std::uint64_t key,
                              LikelihoodMode mode = LikelihoodMode::kConfusionColumn);

/// Index of the sampled report; exposed for accuracy accounting.
Species synthetic_report(Species truth, double diag_px, const ConfusionModel& model, std::uint64_t key);

struct FusionParams {
  double floor = kPosteriorFloor;
  double temper = 1.0;  // likelihood exponent, <= 1 blunts correlated errors
};

/// p'_i proportional to p_i * L_i^temper in log space, floored then renormalized.
/// Throws Error(kDegenerateLikelihood) when no component is positive.
ClassPosterior bayes_update(const ClassPosterior& prior, const Likelihood& likelihood,
                            const FusionParams& params = {});

struct PosteriorSample {
  double t_s = 0.0;
  ClassPosterior posterior;
};

/// Seconds from confirmation until the true-class posterior first reaches the
/// threshold; nullopt when it never does.
std::optional<double> time_to_confidence(std::span<const PosteriorSample> series, Species truth,
                                         double t_confirm, double threshold);

/// Header `t,kite,bird,aircraft,other`.
void write_posterior_csv(std::ostream& out, std::span<const PosteriorSample> series);

}  // namespace skysentry
