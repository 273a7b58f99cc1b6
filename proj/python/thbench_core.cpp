#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "thbench/bench.hpp"
#include "thbench/blinkdata.hpp"
#include "thbench/error.hpp"
#include "thbench/geom.hpp"
#include "thbench/imgq.hpp"
#include "thbench/report.hpp"
#include "thbench/semmet.hpp"
#include "thbench/stnet.hpp"
#include "thbench/synthetic.hpp"

namespace py = pybind11;
using namespace thbench;

namespace {

// Copies a (H, W) or (H, W, C) uint8 / float64 array into a cv::Mat.
cv::Mat to_mat(const py::array& arr) {
  require(arr.ndim() == 2 || arr.ndim() == 3, ErrorCode::kInvalidArgument, "image must be (H, W) or (H, W, C)");
  const int rows = static_cast<int>(arr.shape(0)), cols = static_cast<int>(arr.shape(1));
  const int ch = arr.ndim() == 3 ? static_cast<int>(arr.shape(2)) : 1;
  if (py::isinstance<py::array_t<std::uint8_t>>(arr)) {
    auto a = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>::ensure(arr);
    return cv::Mat(rows, cols, CV_8UC(ch), const_cast<std::uint8_t*>(a.data())).clone();
  }
  auto a = py::array_t<double, py::array::c_style | py::array::forcecast>::ensure(arr);
  return cv::Mat(rows, cols, CV_64FC(ch), const_cast<double*>(a.data())).clone();
}

FeatureVector fv(std::vector<double> v) { return FeatureVector(std::move(v)); }

geom::LandmarkFrame landmark_frame(const Eigen::MatrixXd& m) {
  require(m.rows() == geom::kNumLandmarks && (m.cols() == 2 || m.cols() == 3), ErrorCode::kInvalidArgument,
          "landmarks must be 68 x 2 or 68 x 3");
  return m;
}

bench::BenchConfig config_with(const std::string& config_json, const std::string& output_dir) {
  auto cfg = bench::config_from_json(config_json);
  if (!output_dir.empty()) cfg.output_dir = output_dir;
  return cfg;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Talking-head video evaluation metrics and harness";

  // Exceptions carry the error code as `.code`.
  static py::handle error_type = py::exception<Error>(m, "ThbenchError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = error_type(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error_type.ptr(), exc.ptr());
    }
  });

  // Image quality.
  m.def("ssim", [](const py::array& a, const py::array& b, double peak) {
    imgq::SsimParams p;
    p.peak = peak;
    return imgq::ssim(to_mat(a), to_mat(b), p);
  }, py::arg("a"), py::arg("b"), py::arg("peak") = 255.0);
  m.def("psnr", [](const py::array& a, const py::array& b, double peak) {
    return imgq::psnr(to_mat(a), to_mat(b), peak);
  }, py::arg("a"), py::arg("b"), py::arg("peak") = 255.0, "inf for identical images");
  m.def("cpbd", [](const py::array& img) {
    const auto r = imgq::cpbd(to_mat(img));
    return py::dict(py::arg("score") = r.score, py::arg("edges_detected") = r.edges_detected,
                    py::arg("edge_count") = r.edge_count);
  }, py::arg("image"));
  m.def("frechet_distance", [](const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake) {
    return imgq::frechet_distance(imgq::gaussian_stats(real), imgq::gaussian_stats(fake));
  }, py::arg("real_features"), py::arg("fake_features"), "FID between the Gaussian fits of two (n, d) feature sets");
  m.def("frechet_distance_stats", [](const Eigen::VectorXd& mu1, const Eigen::MatrixXd& s1, const Eigen::VectorXd& mu2,
                                     const Eigen::MatrixXd& s2) {
    return imgq::frechet_distance({mu1, s1, 2}, {mu2, s2, 2});
  }, py::arg("mean1"), py::arg("cov1"), py::arg("mean2"), py::arg("cov2"));

  // Geometry.
  m.def("hanning_window", &geom::hanning_window, py::arg("n"));
  m.def("smooth_sequence", [](const std::vector<double>& x, int window, const std::string& boundary) {
    require(boundary == "reflect" || boundary == "clamp", ErrorCode::kInvalidArgument, "boundary is reflect or clamp");
    return geom::smooth_sequence(x, {window, boundary == "reflect" ? geom::BoundaryPolicy::kReflect
                                                                   : geom::BoundaryPolicy::kClamp});
  }, py::arg("x"), py::arg("window") = 11, py::arg("boundary") = "reflect");
  m.def("rotation_from_euler", [](double pitch, double yaw, double roll) {
    return geom::rotation_from_euler({pitch, yaw, roll});
  }, py::arg("pitch"), py::arg("yaw"), py::arg("roll"));
  m.def("canonical_face", [] { return Eigen::MatrixXd(geom::CanonicalFace::standard().points()); });
  m.def("estimate_pose", [](const Eigen::MatrixXd& lms) {
    const auto e = geom::estimate_pose(landmark_frame(lms), geom::CanonicalFace::standard());
    const auto a = geom::euler_from_rotation(e.rotation);
    return py::make_tuple(a.pitch, a.yaw, a.roll);
  }, py::arg("landmarks"), "(pitch, yaw, roll) in degrees from 68 x 3 landmarks");
  m.def("head_motion_score", [](const std::vector<double>& angles) { return geom::head_motion_score(angles); },
        py::arg("angles"));
  m.def("eye_open_rate", [](const Eigen::MatrixXd& lms) { return geom::eye_open_rate(landmark_frame(lms)); },
        py::arg("landmarks"));

  // Semantic metrics.
  m.def("lrsd", [](std::vector<double> a, std::vector<double> b) { return semmet::lrsd(fv(a), fv(b)); });
  m.def("l2_distance", [](std::vector<double> a, std::vector<double> b) { return semmet::l2_distance(fv(a), fv(b)); });
  m.def("esd", [](std::vector<double> a, std::vector<double> b) { return semmet::esd(fv(a), fv(b)); });
  m.def("bsd", [](const std::vector<std::vector<double>>& real, const std::vector<std::vector<double>>& fake) {
    std::vector<FeatureVector> r, f;
    for (const auto& v : real) r.push_back(fv(v));
    for (const auto& v : fake) f.push_back(fv(v));
    return semmet::bsd(r, f);
  }, py::arg("real_slices"), py::arg("fake_slices"), "mean cosine similarity over paired slice features");
  m.def("topk_accuracy", [](const Eigen::MatrixXd& logits, const std::vector<int>& labels, int k) {
    return semmet::topk_accuracy(logits, labels, k);
  }, py::arg("logits"), py::arg("labels"), py::arg("k"));
  m.def("arcloss", [](const Eigen::MatrixXd& features, const Eigen::MatrixXd& weight, const std::vector<int>& labels,
                      double scale, double margin) {
    const auto r = stnet::arcloss(features, labels, {weight, scale, margin});
    return py::make_tuple(r.loss, r.grad_features, r.grad_weight);
  }, py::arg("features"), py::arg("weight"), py::arg("labels"), py::arg("scale") = 64.0, py::arg("margin") = 0.5,
     "(loss, d loss / d features, d loss / d weight); weight is d x V");

  // Blink slices.
  m.def("label_frames", [](const std::vector<double>& rates, double threshold) {
    std::vector<bool> closed;
    for (auto s : blink::label_frames_with_threshold(rates, threshold)) closed.push_back(s == blink::EyeState::kClosed);
    return closed;
  }, py::arg("rates"), py::arg("threshold"), "True where the eye is closed");
  m.def("open_threshold", [](const std::vector<double>& corpus, double percentile) {
    blink::BlinkSliceConfig cfg;
    cfg.threshold = percentile;
    return blink::open_threshold(corpus, cfg);
  }, py::arg("corpus_rates"), py::arg("percentile") = 10.0);
  m.def("slice_count", [](std::size_t frames, int t, int stride) {
    blink::BlinkSliceConfig cfg;
    cfg.slice_length = t;
    cfg.stride = stride;
    return blink::slice_count(frames, cfg);
  }, py::arg("frames"), py::arg("t") = 12, py::arg("stride") = 1);
  m.def("sample_slices", [](const std::vector<bool>& closed, int t, int stride) {
    blink::BlinkSliceConfig cfg;
    cfg.slice_length = t;
    cfg.stride = stride;
    std::vector<blink::EyeState> states;
    for (bool c : closed) states.push_back(c ? blink::EyeState::kClosed : blink::EyeState::kOpen);
    std::vector<std::pair<int, int>> out;
    for (const auto& s : blink::sample_slices("clip", states, cfg).slices) out.emplace_back(s.start, s.label);
    return out;
  }, py::arg("closed"), py::arg("t") = 12, py::arg("stride") = 1, "[(start, label)] with label 1 for a blink");

  // Reporting.
  m.def("histogram", [](const std::vector<double>& values, const std::vector<double>& edges) {
    report::BinSpec spec;
    spec.edges = edges;
    const auto h = report::histogram(values, spec);
    return py::make_tuple(h.counts, h.ratios);
  }, py::arg("values"), py::arg("edges"), "(counts, ratios); the end bins are open");

  // Harness.
  m.def("default_config", [] { return bench::config_to_json(bench::BenchConfig::defaults()); });
  m.def("write_synthetic_dataset", [](const std::filesystem::path& dir, int clips, int frames, int size,
                                      std::vector<std::string> splits, std::vector<std::string> methods,
                                      std::uint64_t seed) {
    synthetic::DatasetSpec spec;
    spec.clips_per_split = clips;
    spec.frames = frames;
    spec.width = spec.height = size;
    spec.splits = std::move(splits);
    spec.methods = std::move(methods);
    spec.seed = seed;
    synthetic::write_dataset(dir, spec);
    return dir / "manifest.json";
  }, py::arg("directory"), py::arg("clips") = 4, py::arg("frames") = 24, py::arg("size") = 128,
     py::arg("splits") = std::vector<std::string>{"test"},
     py::arg("methods") = std::vector<std::string>{"copy", "noisy"}, py::arg("seed") = 0);
  m.def("preprocess", [](const std::filesystem::path& manifest, const std::string& config_json,
                         const std::string& output_dir) {
    const auto s = bench::run_preprocess(bench::load_manifest(manifest), config_with(config_json, output_dir));
    return std::map<std::string, std::size_t>{{"processed", s.processed}, {"skipped", s.skipped}, {"failed", s.failed}};
  }, py::arg("manifest"), py::arg("config_json") = "{}", py::arg("output_dir") = "",
     py::call_guard<py::gil_scoped_release>());
  m.def("evaluate", [](const std::filesystem::path& manifest, const std::string& config_json,
                       const std::string& output_dir) {
    return report::to_json(bench::run_eval(bench::load_manifest(manifest), config_with(config_json, output_dir)));
  }, py::arg("manifest"), py::arg("config_json") = "{}", py::arg("output_dir") = "",
     py::call_guard<py::gil_scoped_release>(), "runs eval and returns the report as JSON text");
}
