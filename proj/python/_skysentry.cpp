#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <nlohmann/json.hpp>

#include "skysentry/config.hpp"
#include "skysentry/detect.hpp"
#include "skysentry/error.hpp"
#include "skysentry/fuse.hpp"
#include "skysentry/geometry.hpp"
#include "skysentry/motion.hpp"
#include "skysentry/runner.hpp"
#include "skysentry/synthsky.hpp"
#include "skysentry/tiling.hpp"

namespace py = pybind11;
using namespace skysentry;

namespace {

using Gray = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

py::object to_python(const nlohmann::json& j) { return py::module_::import("json").attr("loads")(j.dump()); }

GrayView view_of(const Gray& a) {
  if (a.ndim() != 2) throw py::value_error("expected a 2-D uint8 image");
  return {a.data(), static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)), static_cast<std::ptrdiff_t>(a.shape(1))};
}

py::tuple box_tuple(const BBox& b) { return py::make_tuple(b.x, b.y, b.w, b.h); }

py::dict detection_dict(const Detection& d) {
  py::dict out;
  out["bbox"] = box_tuple(d.bbox);
  out["objectness"] = d.objectness;
  out["scores"] = d.scores;
  return out;
}

py::list detection_list(const std::vector<Detection>& ds) {
  py::list out;
  for (const auto& d : ds) out.append(detection_dict(d));
  return out;
}

Detection detection_from(const py::handle& h) {
  Detection d;
  const auto box = h["bbox"].cast<std::array<double, 4>>();
  d.bbox = {box[0], box[1], box[2], box[3]};
  d.objectness = h["objectness"].cast<double>();
  if (h.contains("scores")) d.scores = h["scores"].cast<ClassScores>();
  return d;
}

StereoRig rig_of(double focal_px, double baseline_m) {
  StereoRig rig;
  rig.left.focal_px = rig.right.focal_px = focal_px;
  rig.baseline_m = baseline_m;
  return rig;
}

py::dict run(const std::string& config_path, std::optional<std::string> output_dir, std::optional<double> seconds,
             bool write_outputs, std::optional<int> workers) {
  auto config = load_config(config_path);
  if (workers) config.detector.workers = *workers;
  RunOptions opts;
  opts.output_dir = std::move(output_dir);
  opts.max_seconds = seconds;
  opts.write_outputs = write_outputs;
  RunResult result;
  {
    py::gil_scoped_release release;
    result = run_scenario(config, opts);
  }
  py::dict out;
  out["metrics"] = to_python(metrics_to_json(result.metrics));
  out["bench"] = to_python(bench_report(config, result));
  py::list commands;
  for (const auto& c : result.log.commands) commands.append(to_python(command_to_json(c)));
  out["commands"] = commands;
  out["ticks"] = result.ticks;
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Bird-detection pipeline: synthetic sky, tiled detection, tracking, fusion and turbine control";

  static py::exception<Error> error(m, "Error");
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error, e.what());
    }
  });

  m.def("triangulate", [](double f, double b, double disparity) { return triangulate(rig_of(f, b), disparity); },
        py::arg("focal_px"), py::arg("baseline_m"), py::arg("disparity_px"), "Z = f B / disparity.");
  m.def("stereo_sigma",
        [](double f, double b, double z, double sd) { return stereo_sigma(rig_of(f, b), z, sd); },
        py::arg("focal_px"), py::arg("baseline_m"), py::arg("distance_m"), py::arg("sigma_disparity_px"));

  m.def("apparent_diag", [](double a, double b, double c, double x) { return apparent_diag({a, b, c}, x); },
        py::arg("a"), py::arg("b"), py::arg("c"), py::arg("distance_m"));
  m.def("invert_diag", [](double a, double b, double c, double d) { return invert_diag({a, b, c}, d); },
        py::arg("a"), py::arg("b"), py::arg("c"), py::arg("diag_px"));
  m.def(
      "fit_calib",
      [](const std::vector<double>& distance, const std::vector<double>& diag) {
        if (distance.size() != diag.size()) throw py::value_error("distance and diag lengths differ");
        std::vector<CalibSample> samples;
        for (std::size_t i = 0; i < distance.size(); ++i) samples.push_back({distance[i], diag[i]});
        const CalibCurve c = fit_calib(samples);
        return py::make_tuple(c.a, c.b, c.c);
      },
      py::arg("distance_m"), py::arg("diag_px"), "Fit diag(x) = a / (x + b) + c; returns (a, b, c).");

  m.def(
      "plan_tiles",
      [](int w, int h, int tile, double overlap) {
        std::vector<std::pair<int, int>> out;
        for (const auto& o : plan_tiles(w, h, tile, overlap).offsets) out.emplace_back(o.x, o.y);
        return out;
      },
      py::arg("width"), py::arg("height"), py::arg("tile") = 300, py::arg("overlap_ratio") = 0.25,
      "Tile origins in row-major order.");
  m.def(
      "iou",
      [](std::array<double, 4> a, std::array<double, 4> b) {
        return iou({a[0], a[1], a[2], a[3]}, {b[0], b[1], b[2], b[3]});
      },
      py::arg("a"), py::arg("b"));
  m.def(
      "nms",
      [](const py::list& dets, double thr) {
        std::vector<Detection> in;
        for (const auto& d : dets) in.push_back(detection_from(d));
        return detection_list(nms(std::move(in), thr));
      },
      py::arg("detections"), py::arg("iou_threshold") = 0.45);

  m.def(
      "dbscan",
      [](const py::array_t<double, py::array::c_style | py::array::forcecast>& pts, double eps, std::size_t min_pts) {
        if (pts.ndim() != 2 || pts.shape(1) != 2) throw py::value_error("expected an (n, 2) array");
        std::vector<Point2> p(static_cast<std::size_t>(pts.shape(0)));
        for (std::size_t i = 0; i < p.size(); ++i) p[i] = {pts.at(i, 0), pts.at(i, 1)};
        return dbscan(p, eps, min_pts).labels;
      },
      py::arg("points"), py::arg("eps"), py::arg("min_pts"), "Cluster labels, -1 for noise.");

  m.def(
      "reference_detect",
      [](const Gray& image, int tile, double overlap, double nms_iou) {
        const GrayView v = view_of(image);
        const ReferenceDetector det;
        std::vector<Detection> out;
        {
          py::gil_scoped_release release;
          out = run_tiled(det, v, plan_tiles(v.width, v.height, tile, overlap), nms_iou);
        }
        return detection_list(out);
      },
      py::arg("image"), py::arg("tile") = 300, py::arg("overlap_ratio") = 0.25, py::arg("nms_iou") = 0.45,
      "Tiled reference detector over a whole frame.");

  m.def(
      "bayes_update",
      [](const ClassScores& prior, const Likelihood& likelihood) {
        ClassPosterior p;
        p.p = prior;
        return bayes_update(p, likelihood).p;
      },
      py::arg("prior"), py::arg("likelihood"), "Posterior over (kite, bird, aircraft, other).");

  py::class_<Scenario>(m, "Scenario")
      .def_readonly("name", &Scenario::name)
      .def_readonly("duration_s", &Scenario::duration_s)
      .def_readonly("frame_rate_hz", &Scenario::frame_rate_hz)
      .def_property_readonly("camera_ids", &pipeline_cameras)
      .def("frame_count", &Scenario::frame_count)
      .def(
          "render",
          [](const Scenario& s, int camera, double t) {
            const ImageFrame f = render_frame(s, camera, t);
            Gray out({f.height, f.width});
            std::copy(f.pixels.begin(), f.pixels.end(), out.mutable_data());
            return out;
          },
          py::arg("camera"), py::arg("t_s"), "Rendered frame as an (h, w) uint8 array.")
      .def(
          "truth",
          [](const Scenario& s, int camera, double t) {
            py::list out;
            for (const auto& b : ground_truth_boxes(s, camera, t)) {
              py::dict d;
              d["target"] = b.target_id;
              d["species"] = std::string(species_name(b.species));
              d["bbox"] = box_tuple(b.bbox);
              d["distance_m"] = b.distance_m;
              out.append(d);
            }
            return out;
          },
          py::arg("camera"), py::arg("t_s"));
  m.def("load_scenario", &load_scenario, py::arg("path"));

  m.def("run", &run, py::arg("config"), py::arg("output_dir") = py::none(), py::arg("seconds") = py::none(),
        py::arg("write_outputs") = true, py::arg("workers") = py::none(),
        "Run the pipeline on a config file; returns metrics, bench report and commands.");
}
