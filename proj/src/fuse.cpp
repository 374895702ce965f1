#include "skysentry/fuse.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <ostream>

#include "skysentry/error.hpp"
#include "skysentry/random.hpp"

namespace skysentry {

Species ClassPosterior::argmax() const {
  std::size_t best = 0;
  for (std::size_t i = 1; i < kNumClasses; ++i) {
    if (p[i] > p[best]) best = i;
  }
  return static_cast<Species>(best);
}

namespace {

void validate_matrix(const ConfusionMatrix& m, const char* name) {
  for (const auto& row : m) {
    double sum = 0.0;
    for (double v : row) {
      if (!(v >= 0.0 && v <= 1.0)) throw Error(Errc::kConfig, std::string(name) + ": entries must be in [0,1]");
      sum += v;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw Error(Errc::kConfig, std::string(name) + ": rows must sum to 1");
  }
}

}  // namespace

void ConfusionModel::validate() const {
  validate_matrix(near, "confusion.near");
  validate_matrix(far, "confusion.far");
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    if (near[i][i] < far[i][i]) throw Error(Errc::kConfig, "confusion: near diagonal must be >= far diagonal");
  }
  if (!(d_far < d_near) || !(d_far > 0.0)) throw Error(Errc::kConfig, "confusion: need 0 < d_far < d_near");
}

ConfusionMatrix ConfusionModel::effective(double diag_px) const {
  const double w = std::clamp((diag_px - d_far) / (d_near - d_far), 0.0, 1.0);
  if (w == 0.0) return far;
  if (w == 1.0) return near;
  ConfusionMatrix m{};
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    for (std::size_t j = 0; j < kNumClasses; ++j) m[i][j] = (1.0 - w) * far[i][j] + w * near[i][j];
  }
  return m;
}

ConfusionMatrix ConfusionModel::symmetric(double accuracy) {
  ConfusionMatrix m{};
  const double off = (1.0 - accuracy) / static_cast<double>(kNumClasses - 1);
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    for (std::size_t j = 0; j < kNumClasses; ++j) m[i][j] = i == j ? accuracy : off;
  }
  return m;
}

ConfusionModel ConfusionModel::identity() {
  ConfusionModel m;
  m.near = symmetric(1.0);
  m.far = symmetric(1.0);
  return m;
}

ConfusionModel ConfusionModel::defaults() {
  ConfusionModel m;
  m.near = symmetric(0.982);
  m.far = symmetric(0.80);
  return m;
}

ConfusionModel confusion_from_json(const nlohmann::json& j) {
  try {
    ConfusionModel m = ConfusionModel::defaults();
    auto read = [&](const char* key, ConfusionMatrix& out) {
      if (!j.contains(key)) return;
      const auto& v = j.at(key);
      if (v.is_number()) {
        out = ConfusionModel::symmetric(v.get<double>());
      } else {
        out = v.get<ConfusionMatrix>();
      }
    };
    read("near", m.near);
    read("far", m.far);
    m.d_near = j.value("d_near", m.d_near);
    m.d_far = j.value("d_far", m.d_far);
    m.validate();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kConfig, std::string("confusion model: ") + e.what());
  }
}

nlohmann::json confusion_to_json(const ConfusionModel& m) {
  return {{"near", m.near}, {"far", m.far}, {"d_near", m.d_near}, {"d_far", m.d_far}};
}

ConfusionModel load_confusion(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::kIo, "cannot open confusion model " + path);
  try {
    return confusion_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    throw Error(Errc::kConfig, path + ": " + e.what());
  }
}

Species synthetic_report(Species truth, double diag_px, const ConfusionModel& model, std::uint64_t key) {
  const auto row = model.effective(diag_px)[index_of(truth)];
  SplitMix64 rng(key);
  const double u = rng.uniform();
  double acc = 0.0;
  for (std::size_t j = 0; j < kNumClasses; ++j) {
    acc += row[j];
    if (u < acc) return static_cast<Species>(j);
  }
  // Rounding left u above the cumulative sum; take the last non-zero entry.
  for (std::size_t j = kNumClasses; j-- > 0;) {
    if (row[j] > 0.0) return static_cast<Species>(j);
  }
  return truth;
}

Likelihood synthetic_classify(Species truth, double diag_px, const ConfusionModel& model, std::uint64_t key,
                              LikelihoodMode mode) {
  const Species reported = synthetic_report(truth, diag_px, model, key);
  Likelihood l{};
  if (mode == LikelihoodMode::kOneHot) {
    l[index_of(reported)] = 1.0;
    return l;
  }
  const auto m = model.effective(diag_px);
  for (std::size_t i = 0; i < kNumClasses; ++i) l[i] = m[i][index_of(reported)];
  return l;
}

ClassPosterior bayes_update(const ClassPosterior& prior, const Likelihood& likelihood, const FusionParams& params) {
  const bool informative = std::any_of(likelihood.begin(), likelihood.end(), [](double v) { return v > 0.0; });
  if (!informative) throw Error(Errc::kDegenerateLikelihood, "likelihood has no positive component");
  std::array<double, kNumClasses> logp{};
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < kNumClasses; ++i) {
    const double l = std::max(0.0, likelihood[i]);
    logp[i] = (prior.p[i] > 0.0 && l > 0.0) ? std::log(prior.p[i]) + params.temper * std::log(l)
                                             : -std::numeric_limits<double>::infinity();
    peak = std::max(peak, logp[i]);
  }
  ClassPosterior out;
  if (!std::isfinite(peak)) {
    // Prior mass sits entirely where the likelihood is zero.
    out.p = likelihood;
  } else {
    for (std::size_t i = 0; i < kNumClasses; ++i) out.p[i] = std::exp(logp[i] - peak);
  }
  double sum = 0.0;
  for (double v : out.p) sum += v;
  for (double& v : out.p) v /= sum;

  // Pin floored components at exactly `floor`; rescale the rest to fill 1.
  std::array<bool, kNumClasses> pinned{};
  for (int pass = 0; pass < static_cast<int>(kNumClasses); ++pass) {
    double pinned_mass = 0.0;
    double free_mass = 0.0;
    bool changed = false;
    for (std::size_t i = 0; i < kNumClasses; ++i) {
      if (!pinned[i] && out.p[i] < params.floor) {
        pinned[i] = true;
        changed = true;
      }
      if (pinned[i]) {
        pinned_mass += params.floor;
      } else {
        free_mass += out.p[i];
      }
    }
    if (!changed) break;
    const double scale = (1.0 - pinned_mass) / free_mass;
    for (std::size_t i = 0; i < kNumClasses; ++i) out.p[i] = pinned[i] ? params.floor : out.p[i] * scale;
  }
  return out;
}

std::optional<double> time_to_confidence(std::span<const PosteriorSample> series, Species truth, double t_confirm,
                                         double threshold) {
  if (!(threshold > 0.0 && threshold < 1.0)) throw Error(Errc::kInvalidArgument, "threshold must be in (0,1)");
  for (const auto& s : series) {
    if (s.t_s < t_confirm) continue;
    if (s.posterior[truth] >= threshold) return s.t_s - t_confirm;
  }
  return std::nullopt;
}

void write_posterior_csv(std::ostream& out, std::span<const PosteriorSample> series) {
  out << "t,kite,bird,aircraft,other\n";
  out.precision(17);
  for (const auto& s : series) {
    out << s.t_s;
    for (double v : s.posterior.p) out << ',' << v;
    out << '\n';
  }
}

}  // namespace skysentry
