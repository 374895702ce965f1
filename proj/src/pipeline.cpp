#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <nlohmann/json.hpp>
#include <thread>

#include "skysentry/error.hpp"
#include "skysentry/random.hpp"
#include "skysentry/runner.hpp"

namespace skysentry {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

class StageClock {
 public:
  explicit StageClock(double& slot) : slot_(slot), start_(Clock::now()) {}
  ~StageClock() { slot_ += std::chrono::duration<double>(Clock::now() - start_).count(); }
  StageClock(const StageClock&) = delete;
  StageClock& operator=(const StageClock&) = delete;

 private:
  double& slot_;
  Clock::time_point start_;
};

class JsonlFile {
 public:
  JsonlFile() = default;
  JsonlFile(const std::string& path, bool append) {
    out_.open(path, append ? std::ios::app : std::ios::trunc);
    if (!out_) throw Error(Errc::kIo, "cannot write " + path);
    path_ = path;
  }
  bool open() const { return out_.is_open(); }
  void write(const json& j) {
    if (!out_.is_open()) return;
    out_ << j.dump() << '\n';
  }
  void flush() {
    if (!out_.is_open()) return;
    out_.flush();
    if (!out_) throw Error(Errc::kIo, "write failed on " + path_);
  }

 private:
  std::ofstream out_;
  std::string path_;
};

struct CameraState {
  const SceneCamera* camera = nullptr;
  std::unique_ptr<FrameDetector> detector;
  std::optional<MotionPipeline> motion;
  Tracker tracker;
  std::map<int, std::vector<PosteriorSample>> series;
  std::map<int, std::map<int, int>> votes;  // track -> target id (-1: no target) -> count
};

ImageFrame load_replay_frame(const std::string& dir, const SceneCamera& cam, std::int64_t index, double t_s) {
  const std::string path = (fs::path(dir) / frame_filename(cam.id, index)).string();
  GrayImage img = read_pgm(path);
  if (img.width != cam.model.width || img.height != cam.model.height) {
    throw Error(Errc::kDimensionMismatch, path + ": frame size does not match camera " + std::to_string(cam.id));
  }
  ImageFrame f;
  f.camera_id = cam.id;
  f.frame_index = index;
  f.t_s = t_s;
  f.width = img.width;
  f.height = img.height;
  f.pixels = std::move(img.pixels);
  return f;
}

std::optional<int> majority_target(const std::map<int, int>& votes) {
  std::optional<int> best;
  int best_count = 0;
  for (const auto& [target, count] : votes) {
    // Real targets win ties against "no target".
    if (count > best_count || (count == best_count && best && *best < 0 && target >= 0)) {
      best = target;
      best_count = count;
    }
  }
  if (!best || *best < 0) return std::nullopt;
  return best;
}

}  // namespace

std::vector<int> pipeline_cameras(const Scenario& scenario) {
  std::vector<int> ids;
  for (const auto& c : scenario.cameras) {
    if (c.kind == CameraKind::kStatic) ids.push_back(c.id);
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

RunResult run_scenario(const PipelineConfig& config, const RunOptions& options) {
  config.validate();
  const Scenario& scenario = config.scenario;
  RunResult result;
  result.camera_ids = pipeline_cameras(scenario);

  std::int64_t ticks = scenario.frame_count();
  if (options.max_seconds) {
    if (*options.max_seconds < 0.0) throw Error(Errc::kConfig, "bench duration must be >= 0");
    const auto limit = static_cast<std::int64_t>(std::floor(*options.max_seconds * scenario.frame_rate_hz + 1e-9));
    ticks = std::min(ticks, limit);
  }
  result.ticks = ticks;

  const std::string out_dir = options.output_dir.value_or(config.output_dir);
  JsonlFile events;
  JsonlFile commands;
  JsonlFile webhook;
  if (options.write_outputs) {
    std::error_code ec;
    fs::create_directories(out_dir, ec);
    if (ec) throw Error(Errc::kIo, "cannot create output directory " + out_dir + ": " + ec.message());
    events = JsonlFile((fs::path(out_dir) / "events.jsonl").string(), false);
    commands = JsonlFile((fs::path(out_dir) / "commands.jsonl").string(), false);
  }
  if (options.webhook_path) webhook = JsonlFile(*options.webhook_path, true);

  std::vector<CameraState> cams;
  for (int id : result.camera_ids) {
    CameraState s;
    s.camera = &scenario.camera(id);
    s.detector = make_frame_detector(config.detector);
    s.tracker = Tracker(config.tracker);
    if (s.detector->needs_pixels()) s.motion.emplace(config.detector.motion);
    cams.push_back(std::move(s));
  }
  Manager manager(scenario, config.manager, config.seed);

  StageTimings& tm = result.timings;
  const auto loop_start = Clock::now();
  for (std::int64_t k = 0; k < ticks; ++k) {
    const double t = scenario.frame_time(k);
    std::vector<TrackSnapshot> snapshots;
    for (auto& cs : cams) {
      const SceneCamera& cam = *cs.camera;
      const FrameRecord record{cam.id, k, t};
      result.log.frames.push_back(record);
      result.truth_frames.push_back(record);

      std::vector<TruthBox> truth;
      std::optional<ImageFrame> frame;
      {
        StageClock clock(tm.render);
        truth = ground_truth_boxes(scenario, cam.id, t);
        if (cs.detector->needs_pixels()) {
          frame = options.replay_dir ? load_replay_frame(*options.replay_dir, cam, k, t)
                                     : render_frame(scenario, cam.id, t);
        }
      }
      for (const auto& b : truth) result.truth.push_back({cam.id, k, t, b});

      json frame_event = {{"type", "frame"}, {"camera", cam.id}, {"frame", k}, {"t", t}};
      if (frame && cs.motion) {
        StageClock clock(tm.motion);
        const MotionResult mr = cs.motion->process(*frame);
        frame_event["changed"] = mr.raw.points.size();
        frame_event["unmasked"] = mr.filtered.points.size();
        frame_event["clusters"] = mr.clusters.size();
        frame_event["masked_fraction"] = cs.motion->mask()->masked_fraction();
      }

      std::vector<Detection> detections;
      {
        StageClock clock(tm.detect);
        detections = cs.detector->detect(FrameContext{scenario, cam.id, t, k, frame ? &*frame : nullptr});
      }

      TrackerStep step;
      {
        StageClock clock(tm.track);
        step = cs.tracker.step(t, detections);
      }

      std::vector<std::optional<int>> det_track(detections.size());
      {
        StageClock clock(tm.fuse);
        std::vector<BBox> dboxes;
        std::vector<BBox> tboxes;
        for (const auto& d : detections) dboxes.push_back(d.bbox);
        for (const auto& b : truth) tboxes.push_back(b.bbox);
        std::vector<std::optional<std::size_t>> det_truth(detections.size());
        for (const auto& [di, ti] : match_boxes(dboxes, tboxes, config.metrics.iou)) det_truth[di] = ti;

        std::map<int, Track*> by_id;
        for (auto& tr : cs.tracker.tracks()) by_id[tr.id] = &tr;
        for (const auto& [track_id, di] : step.owned) {
          det_track[di] = track_id;
          const auto found = by_id.find(track_id);
          if (found == by_id.end()) continue;  // retired by this very step
          Track* tr = found->second;
          auto& series = cs.series[track_id];
          if (series.empty()) tr->posterior = config.fusion.prior;
          const Species truth_species = det_truth[di] ? truth[*det_truth[di]].species : Species::kOther;
          const int target = det_truth[di] ? truth[*det_truth[di]].target_id : -1;
          ++cs.votes[track_id][target];
          const std::uint64_t key = stream_key({config.seed, 0xC1A55ULL, static_cast<std::uint64_t>(cam.id),
                                                static_cast<std::uint64_t>(track_id), static_cast<std::uint64_t>(k)});
          const Likelihood l = synthetic_classify(truth_species, detections[di].bbox.diag(), config.fusion.confusion,
                                                  key, config.fusion.mode);
          tr->posterior = bayes_update(tr->posterior, l, config.fusion.params);
          detections[di].scores = l;
        }
        for (const auto& tr : cs.tracker.tracks()) cs.series[tr.id].push_back({t, tr.posterior});
      }

      for (const auto& tr : cs.tracker.tracks()) {
        TrackSnapshot s;
        s.camera_id = cam.id;
        s.track_id = tr.id;
        s.status = tr.status;
        s.kite_posterior = tr.posterior[Species::kKite];
        s.u = tr.state.x[0];
        s.v = tr.state.x[1];
        s.bbox = tr.last_bbox;
        try {
          s.distance_m = invert_diag(cam.calib, tr.last_bbox.diag());
        } catch (const Error&) {
          s.distance_m = std::numeric_limits<double>::infinity();
        }
        snapshots.push_back(s);
      }

      {
        StageClock clock(tm.io);
        frame_event["detections"] = detections.size();
        frame_event["truths"] = truth.size();
        events.write(frame_event);
        for (std::size_t i = 0; i < detections.size(); ++i) {
          result.log.detections.push_back({cam.id, k, t, detections[i], det_track[i]});
          json e = detection_to_json(detections[i], cam.id, k);
          e["type"] = "detection";
          e["t"] = t;
          e["track"] = det_track[i] ? json(*det_track[i]) : json(nullptr);
          events.write(e);
        }
        for (const auto& tr : cs.tracker.tracks()) {
          json e = track_to_json(tr, t, cam.id);
          e["type"] = "track";
          events.write(e);
        }
      }
    }

    ManagerTick mt;
    {
      StageClock clock(tm.manager);
      const auto states = sample_state(scenario, t);
      mt = manager.tick(t, snapshots, states);
    }
    {
      StageClock clock(tm.io);
      json e = manager_tick_to_json(mt);
      e["type"] = "manager";
      events.write(e);
      if (mt.command) {
        result.log.commands.push_back(*mt.command);
        json c = command_to_json(*mt.command);
        commands.write(c);
        webhook.write(c);
        c["type"] = "command";
        events.write(c);
        webhook.flush();
      }
      events.flush();
      commands.flush();
    }
    result.manager_ticks.push_back(mt);
  }
  tm.total = std::chrono::duration<double>(Clock::now() - loop_start).count();

  double mask_sum = 0.0;
  int mask_count = 0;
  for (auto& cs : cams) {
    if (cs.motion && cs.motion->mask()) {
      mask_sum += cs.motion->mask()->masked_fraction();
      ++mask_count;
    }
    for (const auto& tr : cs.tracker.all_tracks()) {
      TrackSummary s;
      s.camera_id = cs.camera->id;
      s.track_id = tr.id;
      s.born_t = tr.born_t;
      s.confirmed_t = tr.confirmed_t;
      s.final_posterior = tr.posterior;
      s.series = cs.series[tr.id];
      s.target_id = majority_target(cs.votes[tr.id]);
      if (s.target_id) {
        for (const auto& target : scenario.targets) {
          if (target.id == *s.target_id) s.truth = target.species;
        }
      }
      result.log.tracks.push_back(std::move(s));
    }
  }
  if (mask_count > 0) result.log.masked_fraction = mask_sum / mask_count;

  result.metrics = compute_metrics(result.log, result.truth_frames, result.truth, config.metrics);
  if (tm.total > 0.0 && ticks > 0) result.metrics.fps = static_cast<double>(ticks) / tm.total;

  if (options.write_outputs) {
    for (const auto& s : result.log.tracks) {
      json e = {{"type", "track_summary"},
                {"camera", s.camera_id},
                {"id", s.track_id},
                {"born_t", s.born_t},
                {"confirmed_t", s.confirmed_t >= 0.0 ? json(s.confirmed_t) : json(nullptr)},
                {"target", s.target_id ? json(*s.target_id) : json(nullptr)},
                {"truth", s.truth ? json(species_name(*s.truth)) : json(nullptr)},
                {"fused", species_name(s.final_posterior.argmax())},
                {"posterior", s.final_posterior.p}};
      events.write(e);
    }
    events.flush();
    std::ofstream metrics_out(fs::path(out_dir) / "metrics.csv", std::ios::trunc);
    if (!metrics_out) throw Error(Errc::kIo, "cannot write " + out_dir + "/metrics.csv");
    write_metrics_csv(metrics_out, result.metrics);
    if (config.posterior_csv) {
      const fs::path post_dir = fs::path(out_dir) / "posteriors";
      fs::remove_all(post_dir);
      fs::create_directories(post_dir);
      for (const auto& s : result.log.tracks) {
        if (s.confirmed_t < 0.0) continue;
        std::ofstream f(post_dir / ("cam" + std::to_string(s.camera_id) + "_track" + std::to_string(s.track_id) + ".csv"));
        if (!f) throw Error(Errc::kIo, "cannot write posterior csv in " + post_dir.string());
        write_posterior_csv(f, s.series);
      }
    }
  }
  return result;
}

std::string hardware_description() {
  std::string model = "unknown cpu";
  std::ifstream cpuinfo("/proc/cpuinfo");
  std::string line;
  while (std::getline(cpuinfo, line)) {
    if (line.rfind("model name", 0) == 0) {
      const auto colon = line.find(':');
      if (colon != std::string::npos) model = line.substr(colon + 2);
      break;
    }
  }
  return model + ", " + std::to_string(std::thread::hardware_concurrency()) + " hardware threads";
}

json bench_report(const PipelineConfig& config, const RunResult& result) {
  const StageTimings& t = result.timings;
  const std::int64_t camera_frames = result.ticks * static_cast<std::int64_t>(result.camera_ids.size());
  json j;
  j["hardware"] = hardware_description();
  j["detector"] = config.detector.kind;
  j["cameras"] = result.camera_ids.size();
  if (!result.camera_ids.empty()) {
    const auto& cam = config.scenario.camera(result.camera_ids.front()).model;
    j["resolution"] = {cam.width, cam.height};
  }
  j["ticks"] = result.ticks;
  j["camera_frames"] = camera_frames;
  j["frame_rate_hz"] = config.scenario.frame_rate_hz;
  j["wall_s"] = t.total;
  j["stages_s"] = {{"render", t.render}, {"motion", t.motion}, {"detect", t.detect}, {"track", t.track},
                   {"fuse", t.fuse},     {"manager", t.manager}, {"io", t.io}};
  j["stage_sum_s"] = t.stage_sum();
  if (result.ticks > 0 && t.total > 0.0) {
    const double fps = static_cast<double>(result.ticks) / t.total;
    j["fps"] = fps;
    j["camera_fps"] = static_cast<double>(camera_frames) / t.total;
    j["realtime"] = fps >= config.scenario.frame_rate_hz;
  } else {
    j["fps"] = nullptr;
    j["camera_fps"] = nullptr;
    j["realtime"] = nullptr;
  }
  return j;
}

SimulateSummary simulate(const Scenario& scenario, const std::optional<std::string>& dump_dir) {
  scenario.validate();
  SimulateSummary s;
  s.cameras = pipeline_cameras(scenario);
  s.frames = scenario.frame_count();
  JsonlFile truth_out;
  if (dump_dir) {
    std::error_code ec;
    fs::create_directories(*dump_dir, ec);
    if (ec) throw Error(Errc::kIo, "cannot create " + *dump_dir + ": " + ec.message());
    truth_out = JsonlFile((fs::path(*dump_dir) / "truth.jsonl").string(), false);
  }
  for (std::int64_t k = 0; k < s.frames; ++k) {
    const double t = scenario.frame_time(k);
    for (int id : s.cameras) {
      const ImageFrame f = render_frame(scenario, id, t);
      const auto boxes = ground_truth_boxes(scenario, id, t);
      s.truth_boxes += static_cast<std::int64_t>(boxes.size());
      if (dump_dir) {
        write_pgm((fs::path(*dump_dir) / frame_filename(id, k)).string(), f.view());
        for (const auto& b : boxes) truth_out.write(truth_box_to_json(b, id, k, t));
      }
    }
  }
  truth_out.flush();
  return s;
}

}  // namespace skysentry
