#include "thbench/embed.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>
#include <opencv2/imgproc.hpp>

#include "text_util.hpp"
#include "thbench/error.hpp"
#include "thbench/hash.hpp"
#include "thbench/imgq.hpp"

namespace thbench::embed {

std::string to_string(Modality m) {
  return m == Modality::kFaceIdentity ? "face-identity" : "image-inception";
}

Modality modality_from_string(const std::string& s) {
  if (s == "face-identity") return Modality::kFaceIdentity;
  if (s == "image-inception") return Modality::kImageInception;
  fail(ErrorCode::kConfiguration, "unknown provider modality '" + s + "'");
}

namespace {

double unit_scale(int depth) {
  switch (depth) {
    case CV_8U: return 1.0 / 255.0;
    case CV_16U: return 1.0 / 65535.0;
    default: return 1.0;
  }
}

FeatureVector checked_vector(std::vector<double> values, const std::string& source,
                             const std::string& provider) {
  for (double v : values)
    require(std::isfinite(v), ErrorCode::kProviderFault,
            "provider '" + provider + "' produced a non-finite embedding");
  return FeatureVector(std::move(values), source);
}

}  // namespace

StubProvider::StubProvider(std::string name, Modality modality)
    : name_(std::move(name)), modality_(modality), fingerprint_("stub:" + to_string(modality)) {}

FeatureVector StubProvider::embed(const cv::Mat& img) const {
  require(!img.empty(), ErrorCode::kInvalidArgument, "stub provider: empty image");
  const double scale = unit_scale(img.depth());
  cv::Mat f;
  img.convertTo(f, CV_MAKETYPE(CV_64F, img.channels()), scale);
  const cv::Scalar means = cv::mean(f);
  std::vector<double> v(4);
  if (img.channels() == 1) {
    v[0] = v[1] = v[2] = means[0];
  } else {
    v[0] = means[2];  // BGR storage
    v[1] = means[1];
    v[2] = means[0];
  }
  cv::Scalar mu, sigma;
  cv::meanStdDev(imgq::to_luma(f), mu, sigma);
  v[3] = sigma[0];
  return checked_vector(std::move(v), fingerprint_, name_);
}

std::unique_ptr<LinearProvider> LinearProvider::load(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path))
    fail(ErrorCode::kProviderLoad, "model artifact not found: " + path.string());
  std::string text;
  try {
    text = detail::read_file(path);
  } catch (const Error& e) {
    fail(ErrorCode::kProviderLoad, e.what());
  }
  std::unique_ptr<LinearProvider> p(new LinearProvider());
  try {
    const auto doc = nlohmann::json::parse(text);
    if (doc.at("format").get<std::string>() != "thbench-linear-embedding/1")
      fail(ErrorCode::kProviderLoad, path.string() + ": unsupported artifact format");
    p->name_ = doc.value("name", path.stem().string());
    p->modality_ = modality_from_string(doc.value("modality", std::string("face-identity")));
    const auto& in = doc.at("input");
    p->width_ = in.at("width").get<int>();
    p->height_ = in.at("height").get<int>();
    p->channels_ = in.at("channels").get<int>();
    if (p->width_ <= 0 || p->height_ <= 0 || (p->channels_ != 1 && p->channels_ != 3))
      fail(ErrorCode::kProviderLoad, path.string() + ": bad input geometry");
    const auto& w = doc.at("weights");
    const auto inputs = static_cast<Eigen::Index>(p->width_) * p->height_ * p->channels_;
    if (!w.is_array() || w.empty())
      fail(ErrorCode::kProviderLoad, path.string() + ": empty weight matrix");
    p->weights_.resize(static_cast<Eigen::Index>(w.size()), inputs);
    for (std::size_t r = 0; r < w.size(); ++r) {
      if (static_cast<Eigen::Index>(w[r].size()) != inputs)
        fail(ErrorCode::kProviderLoad, path.string() + ": weight row has wrong length");
      for (Eigen::Index c = 0; c < inputs; ++c)
        p->weights_(static_cast<Eigen::Index>(r), c) = w[r][static_cast<std::size_t>(c)].get<double>();
    }
    p->bias_ = Eigen::VectorXd::Zero(p->weights_.rows());
    if (doc.contains("bias")) {
      const auto& b = doc.at("bias");
      if (static_cast<Eigen::Index>(b.size()) != p->weights_.rows())
        fail(ErrorCode::kProviderLoad, path.string() + ": bias length mismatch");
      for (std::size_t i = 0; i < b.size(); ++i) p->bias_(static_cast<Eigen::Index>(i)) = b[i].get<double>();
    }
    p->activation_ = doc.value("activation", std::string("none"));
    if (p->activation_ != "none" && p->activation_ != "relu" && p->activation_ != "tanh")
      fail(ErrorCode::kProviderLoad, path.string() + ": unknown activation " + p->activation_);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kProviderLoad, path.string() + ": corrupt artifact: " + e.what());
  } catch (const Error& e) {
    if (e.code() == ErrorCode::kProviderLoad) throw;
    fail(ErrorCode::kProviderLoad, path.string() + ": " + e.what());
  }
  p->fingerprint_ = "linear:" + fnv1a_hex(text);
  return p;
}

FeatureVector LinearProvider::embed(const cv::Mat& img) const {
  require(!img.empty(), ErrorCode::kInvalidArgument, "linear provider: empty image");
  cv::Mat src = img;
  if (src.channels() != channels_) {
    cv::Mat conv;
    if (channels_ == 1)
      cv::cvtColor(src, conv, src.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
    else
      cv::cvtColor(src, conv, cv::COLOR_GRAY2BGR);
    src = conv;
  }
  cv::Mat resized;
  if (src.cols != width_ || src.rows != height_)
    cv::resize(src, resized, cv::Size(width_, height_), 0, 0, cv::INTER_AREA);
  else
    resized = src;
  cv::Mat f;
  resized.convertTo(f, CV_MAKETYPE(CV_64F, channels_), unit_scale(resized.depth()));
  f = f.isContinuous() ? f : f.clone();
  const Eigen::Map<const Eigen::VectorXd> x(f.ptr<double>(), weights_.cols());
  Eigen::VectorXd y = weights_ * x + bias_;
  if (activation_ == "relu") y = y.cwiseMax(0.0);
  if (activation_ == "tanh") y = y.array().tanh().matrix();
  return checked_vector(std::vector<double>(y.data(), y.data() + y.size()), fingerprint_, name_);
}

std::unique_ptr<EmbeddingProvider> make_provider(const ProviderConfig& cfg,
                                                 const std::filesystem::path& model_dir) {
  if (cfg.model_source == "stub") {
    if (cfg.dim != 4)
      fail(ErrorCode::kConfiguration, "stub provider '" + cfg.name + "' has d = 4, config says " +
                                          std::to_string(cfg.dim));
    return std::make_unique<StubProvider>(cfg.name, cfg.modality);
  }
  std::filesystem::path path = cfg.model_source;
  if (path.is_relative() && !model_dir.empty()) path = model_dir / path;
  auto p = LinearProvider::load(path);
  if (p->dimensionality() != cfg.dim)
    fail(ErrorCode::kProviderLoad, "provider '" + cfg.name + "' declares d = " +
                                       std::to_string(cfg.dim) + " but the artifact has d = " +
                                       std::to_string(p->dimensionality()));
  return p;
}

double arcsim(const FeatureVector& a, const FeatureVector& b) {
  require(a.dim() == b.dim(), ErrorCode::kInvalidArgument, "arcsim: dimension mismatch");
  require(a.source() == b.source(), ErrorCode::kPairing,
          "arcsim: features come from different models");
  require(a.norm() > 0.0 && b.norm() > 0.0, ErrorCode::kDegenerateEmbedding,
          "arcsim: zero-norm embedding");
  const double c = a.as_eigen().dot(b.as_eigen()) / (a.norm() * b.norm());
  return std::clamp(c, -1.0, 1.0);
}

VideoSimilarity video_arcsim(std::span<const cv::Mat> real_frames,
                             std::span<const cv::Mat> fake_frames,
                             const EmbeddingProvider& provider) {
  require(real_frames.size() == fake_frames.size(), ErrorCode::kPairing,
          "video_arcsim: paired clips have " + std::to_string(real_frames.size()) + " and " +
              std::to_string(fake_frames.size()) + " frames");
  require(!real_frames.empty(), ErrorCode::kInvalidArgument, "video_arcsim: empty clips");
  VideoSimilarity out;
  out.per_frame.reserve(real_frames.size());
  for (std::size_t i = 0; i < real_frames.size(); ++i)
    out.per_frame.push_back(arcsim(provider.embed(real_frames[i]), provider.embed(fake_frames[i])));
  out.mean = compensated_mean(out.per_frame);
  return out;
}

}  // namespace thbench::embed
