#include "skysentry/metrics.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <limits>
#include <map>
#include <nlohmann/json.hpp>
#include <ostream>
#include <set>
#include <tuple>

#include "skysentry/error.hpp"
#include "skysentry/tiling.hpp"

namespace skysentry {

namespace {

using FrameId = std::pair<int, std::int64_t>;

std::string format_number(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

template <typename T>
std::string format_optional(const std::optional<T>& v) {
  if (!v) return "NA";
  if constexpr (std::is_floating_point_v<T>) {
    return format_number(*v);
  } else {
    return std::to_string(*v);
  }
}

nlohmann::json optional_json(const std::optional<double>& v) {
  if (!v) return nullptr;
  if (std::isinf(*v)) return "inf";
  return *v;
}

}  // namespace

std::vector<TruthRecord> collect_truth(const Scenario& scenario, std::span<const FrameRecord> frames) {
  std::vector<TruthRecord> out;
  for (const auto& f : frames) {
    for (const auto& box : ground_truth_boxes(scenario, f.camera_id, f.t_s)) {
      out.push_back({f.camera_id, f.frame, f.t_s, box});
    }
  }
  return out;
}

std::vector<std::pair<std::size_t, std::size_t>> match_boxes(std::span<const BBox> detections,
                                                             std::span<const BBox> truths, double iou_threshold) {
  struct Candidate {
    double iou;
    std::size_t det;
    std::size_t truth;
  };
  std::vector<Candidate> cands;
  for (std::size_t i = 0; i < detections.size(); ++i) {
    for (std::size_t j = 0; j < truths.size(); ++j) {
      const double v = iou(detections[i], truths[j]);
      if (v >= iou_threshold) cands.push_back({v, i, j});
    }
  }
  std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
    return std::tuple(-a.iou, a.det, a.truth) < std::tuple(-b.iou, b.det, b.truth);
  });
  std::vector<bool> det_used(detections.size(), false);
  std::vector<bool> truth_used(truths.size(), false);
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (const auto& c : cands) {
    if (det_used[c.det] || truth_used[c.truth]) continue;
    det_used[c.det] = true;
    truth_used[c.truth] = true;
    out.emplace_back(c.det, c.truth);
  }
  return out;
}

double average_precision(std::vector<std::pair<double, bool>> scored, std::int64_t num_truths) {
  if (num_truths <= 0) throw Error(Errc::kInvalidArgument, "average precision needs at least one truth");
  std::stable_sort(scored.begin(), scored.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  std::vector<double> precision;
  std::vector<double> recall;
  std::int64_t tp = 0;
  for (std::size_t k = 0; k < scored.size(); ++k) {
    if (scored[k].second) ++tp;
    precision.push_back(static_cast<double>(tp) / static_cast<double>(k + 1));
    recall.push_back(static_cast<double>(tp) / static_cast<double>(num_truths));
  }
  // Precision envelope: best precision at any recall >= r.
  for (std::size_t k = precision.size(); k-- > 1;) precision[k - 1] = std::max(precision[k - 1], precision[k]);
  double sum = 0.0;
  std::size_t k = 0;
  for (int i = 0; i <= 100; ++i) {
    const double r = i / 100.0;
    while (k < recall.size() && recall[k] < r - 1e-12) ++k;
    if (k < recall.size()) sum += precision[k];
  }
  return sum / 101.0;
}

std::optional<double> quantile(std::vector<double> values, double q) {
  if (values.empty()) return std::nullopt;
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(values.size() - 1, lo + 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || std::isinf(values[lo])) return values[lo];
  if (std::isinf(values[hi])) return values[hi];
  return values[lo] + frac * (values[hi] - values[lo]);
}

RunMetrics compute_metrics(const RunLog& log, std::span<const FrameRecord> truth_frames,
                           std::span<const TruthRecord> truth, const MetricsParams& params) {
  std::map<FrameId, double> frame_times;
  for (const auto& f : truth_frames) frame_times[{f.camera_id, f.frame}] = f.t_s;
  if (frame_times.size() != truth_frames.size()) throw Error(Errc::kMismatchedRun, "duplicate frame in truth");
  std::set<FrameId> seen;
  for (const auto& f : log.frames) {
    auto it = frame_times.find({f.camera_id, f.frame});
    if (it == frame_times.end() || std::abs(it->second - f.t_s) > 1e-9 || !seen.insert(it->first).second) {
      throw Error(Errc::kMismatchedRun, "log frame cam" + std::to_string(f.camera_id) + " f" +
                                            std::to_string(f.frame) + " does not match the truth frames");
    }
  }
  if (seen.size() != frame_times.size()) throw Error(Errc::kMismatchedRun, "log covers fewer frames than truth");

  std::map<FrameId, std::vector<std::size_t>> dets_by_frame;
  std::map<FrameId, std::vector<std::size_t>> truths_by_frame;
  for (std::size_t i = 0; i < log.detections.size(); ++i) {
    const auto& d = log.detections[i];
    if (!seen.contains({d.camera_id, d.frame})) throw Error(Errc::kMismatchedRun, "detection on unknown frame");
    dets_by_frame[{d.camera_id, d.frame}].push_back(i);
  }
  for (std::size_t j = 0; j < truth.size(); ++j) {
    const auto& t = truth[j];
    if (!seen.contains({t.camera_id, t.frame})) throw Error(Errc::kMismatchedRun, "truth on unknown frame");
    truths_by_frame[{t.camera_id, t.frame}].push_back(j);
  }

  std::vector<bool> det_tp(log.detections.size(), false);
  std::vector<bool> truth_hit(truth.size(), false);
  for (const auto& [frame, det_idx] : dets_by_frame) {
    auto it = truths_by_frame.find(frame);
    if (it == truths_by_frame.end()) continue;
    std::vector<BBox> dboxes;
    std::vector<BBox> tboxes;
    for (auto i : det_idx) dboxes.push_back(log.detections[i].detection.bbox);
    for (auto j : it->second) tboxes.push_back(truth[j].box.bbox);
    for (const auto& [di, ti] : match_boxes(dboxes, tboxes, params.iou)) {
      det_tp[det_idx[di]] = true;
      truth_hit[it->second[ti]] = true;
    }
  }

  RunMetrics m;
  m.frames = static_cast<std::int64_t>(log.frames.size());
  m.detections = static_cast<std::int64_t>(log.detections.size());
  m.truths = static_cast<std::int64_t>(truth.size());
  m.true_positives = std::count(det_tp.begin(), det_tp.end(), true);
  m.false_positives = m.detections - m.true_positives;
  if (m.detections > 0) m.precision = static_cast<double>(m.true_positives) / static_cast<double>(m.detections);
  if (m.truths > 0) {
    m.recall = static_cast<double>(m.true_positives) / static_cast<double>(m.truths);
    std::vector<std::pair<double, bool>> scored;
    scored.reserve(log.detections.size());
    for (std::size_t i = 0; i < log.detections.size(); ++i) {
      scored.emplace_back(log.detections[i].detection.objectness, det_tp[i]);
    }
    m.average_precision = average_precision(std::move(scored), m.truths);
  }

  // Per (camera, target) truth series in frame order.
  std::map<std::pair<int, int>, std::vector<std::size_t>> series;
  for (std::size_t j = 0; j < truth.size(); ++j) series[{truth[j].camera_id, truth[j].box.target_id}].push_back(j);
  std::int64_t tracks_hit = 0;
  for (auto& [key, idx] : series) {
    std::stable_sort(idx.begin(), idx.end(), [&](auto a, auto b) { return truth[a].frame < truth[b].frame; });
    bool any = false;
    int current_bin = -1;
    std::int64_t prev_frame = 0;
    bool interval_hit = false;
    auto close_interval = [&]() {
      if (current_bin == 0) {
        ++m.near_interval.total;
        m.near_interval.hits += interval_hit ? 1 : 0;
      } else if (current_bin == 1) {
        ++m.far_interval.total;
        m.far_interval.hits += interval_hit ? 1 : 0;
      }
    };
    for (auto j : idx) {
      const double d = truth[j].box.distance_m;
      const int bin = d <= params.near_max_m ? 0 : (d <= params.far_max_m ? 1 : 2);
      if (bin == 0) {
        ++m.near_fix.total;
        m.near_fix.hits += truth_hit[j] ? 1 : 0;
      } else if (bin == 1) {
        ++m.far_fix.total;
        m.far_fix.hits += truth_hit[j] ? 1 : 0;
      }
      if (bin != current_bin || truth[j].frame != prev_frame + 1) {
        close_interval();
        current_bin = bin;
        interval_hit = false;
      }
      interval_hit = interval_hit || truth_hit[j];
      prev_frame = truth[j].frame;
      any = any || truth_hit[j];
    }
    close_interval();
    tracks_hit += any ? 1 : 0;
  }
  if (!series.empty()) m.track_recall = static_cast<double>(tracks_hit) / static_cast<double>(series.size());

  std::int64_t correct = 0;
  std::vector<double> ttc;
  for (const auto& tr : log.tracks) {
    if (tr.confirmed_t < 0.0 || !tr.truth) continue;
    ++m.tracks_evaluated;
    const Species fused = tr.final_posterior.argmax();
    ++m.confusion[index_of(*tr.truth)][index_of(fused)];
    correct += fused == *tr.truth ? 1 : 0;
    const auto t = time_to_confidence(tr.series, *tr.truth, tr.confirmed_t, params.confidence);
    ttc.push_back(t ? *t : std::numeric_limits<double>::infinity());
    m.ttc_reached += t ? 1 : 0;
  }
  m.ttc_total = static_cast<std::int64_t>(ttc.size());
  if (m.tracks_evaluated > 0) {
    m.fused_accuracy = static_cast<double>(correct) / static_cast<double>(m.tracks_evaluated);
  }
  m.ttc_median_s = quantile(ttc, 0.5);
  m.ttc_p99_s = quantile(ttc, 0.99);
  m.masked_fraction = log.masked_fraction;

  for (const auto& c : log.commands) {
    if (c.action == TurbineAction::kStop) {
      ++m.stops;
      if (!m.first_stop_t) {
        m.first_stop_t = c.t_s;
        m.first_stop_distance_m = c.distance_m;
      }
    } else {
      ++m.runs;
    }
  }
  return m;
}

void write_metrics_csv(std::ostream& out, const RunMetrics& m) {
  out << "metric,value\n";
  auto row = [&](const char* name, const std::string& value) { out << name << ',' << value << '\n'; };
  row("frames", std::to_string(m.frames));
  row("detections", std::to_string(m.detections));
  row("truths", std::to_string(m.truths));
  row("true_positives", std::to_string(m.true_positives));
  row("false_positives", std::to_string(m.false_positives));
  row("precision", format_optional(m.precision));
  row("recall", format_optional(m.recall));
  row("track_recall", format_optional(m.track_recall));
  row("average_precision", format_optional(m.average_precision));
  row("near_rate", format_optional(m.near_fix.rate()));
  row("far_rate", format_optional(m.far_fix.rate()));
  row("near_count", std::to_string(m.near_fix.total));
  row("far_count", std::to_string(m.far_fix.total));
  row("near_interval_rate", format_optional(m.near_interval.rate()));
  row("far_interval_rate", format_optional(m.far_interval.rate()));
  row("near_interval_count", std::to_string(m.near_interval.total));
  row("far_interval_count", std::to_string(m.far_interval.total));
  row("tracks_evaluated", std::to_string(m.tracks_evaluated));
  row("fused_accuracy", format_optional(m.fused_accuracy));
  row("ttc_reached", std::to_string(m.ttc_reached));
  row("ttc_total", std::to_string(m.ttc_total));
  row("ttc_median_s", format_optional(m.ttc_median_s));
  row("ttc_p99_s", format_optional(m.ttc_p99_s));
  row("masked_fraction", format_optional(m.masked_fraction));
  row("fps", format_optional(m.fps));
  row("stops", std::to_string(m.stops));
  row("runs", std::to_string(m.runs));
  row("first_stop_t", format_optional(m.first_stop_t));
  row("first_stop_distance_m", format_optional(m.first_stop_distance_m));
  for (auto t : kAllSpecies) {
    for (auto f : kAllSpecies) {
      const std::string name = "confusion_" + std::string(species_name(t)) + "_" + std::string(species_name(f));
      row(name.c_str(), std::to_string(m.confusion[index_of(t)][index_of(f)]));
    }
  }
}

nlohmann::json metrics_to_json(const RunMetrics& m) {
  return {{"frames", m.frames},
          {"detections", m.detections},
          {"truths", m.truths},
          {"true_positives", m.true_positives},
          {"false_positives", m.false_positives},
          {"precision", optional_json(m.precision)},
          {"recall", optional_json(m.recall)},
          {"track_recall", optional_json(m.track_recall)},
          {"average_precision", optional_json(m.average_precision)},
          {"near_rate", optional_json(m.near_fix.rate())},
          {"far_rate", optional_json(m.far_fix.rate())},
          {"near_interval_rate", optional_json(m.near_interval.rate())},
          {"far_interval_rate", optional_json(m.far_interval.rate())},
          {"confusion", m.confusion},
          {"tracks_evaluated", m.tracks_evaluated},
          {"fused_accuracy", optional_json(m.fused_accuracy)},
          {"ttc_median_s", optional_json(m.ttc_median_s)},
          {"ttc_p99_s", optional_json(m.ttc_p99_s)},
          {"masked_fraction", optional_json(m.masked_fraction)},
          {"fps", optional_json(m.fps)},
          {"stops", m.stops},
          {"runs", m.runs},
          {"first_stop_t", optional_json(m.first_stop_t)},
          {"first_stop_distance_m", optional_json(m.first_stop_distance_m)}};
}

}  // namespace skysentry
