#include "thbench/stnet.hpp"

#include <cmath>
#include <random>

#include <opencv2/imgproc.hpp>

#include "stnet_json.hpp"
#include "thbench/error.hpp"
#include "thbench/hash.hpp"

namespace thbench::stnet {

using nn::Tensor;

// ---------------------------------------------------------------------------
// Configuration

void STNetConfig::validate() const {
  auto check = [](bool ok, const std::string& what) {
    require(ok, ErrorCode::kConfiguration, "stnet config: " + what);
  };
  check(frames >= 2, "frames must be >= 2");
  check(height >= 1 && width >= 1 && channels >= 1, "input extents must be positive");
  check(feature_dim >= 2, "feature_dim must be >= 2");
  check(num_classes >= 2, "num_classes must be >= 2");
  check(!st_stage.empty(), "at least one spatio-temporal conv is required");
  int h = height, w = width;
  for (const auto& l : st_stage) {
    check(l.channels >= 1, "st channels must be positive");
    for (int k : l.kernel) check(k >= 1 && k % 2 == 1, "st kernels must be odd");
    check(l.stride[0] == 1, "st layers must keep the frame count (temporal stride 1)");
    check(l.stride[1] >= 1 && l.stride[2] >= 1, "st strides must be positive");
    h = (h - 1) / l.stride[1] + 1;
    w = (w - 1) / l.stride[2] + 1;
  }
  check(!refine_widths.empty() && refine_widths.size() == refine_blocks.size(),
        "refine_widths and refine_blocks must be non-empty and equal in length");
  for (std::size_t s = 0; s < refine_widths.size(); ++s) {
    check(refine_widths[s] >= 1 && refine_blocks[s] >= 1, "refine stages must be non-empty");
    if (s > 0) {
      h = (h - 1) / 2 + 1;
      w = (w - 1) / 2 + 1;
    }
  }
  check(fusion_kernel >= 1 && fusion_kernel % 2 == 1, "fusion_kernel must be odd");
  for (int hsz : mlp_hidden) check(hsz >= 1, "mlp hidden sizes must be positive");
}

STNetConfig STNetConfig::toy(int num_classes) {
  STNetConfig c;
  c.frames = 8;
  c.height = 16;
  c.width = 16;
  c.channels = 1;
  c.st_stage = {{8, {5, 3, 3}, {1, 1, 1}}, {8, {3, 3, 3}, {1, 2, 2}}};
  c.refine_widths = {8, 16, 16, 32};
  c.refine_blocks = {2, 2, 2, 2};
  c.fusion_kernel = 3;
  c.feature_dim = 32;
  c.mlp_hidden = {};
  c.num_classes = num_classes;
  return c;
}

void to_json(nlohmann::json& j, const STNetConfig& cfg) {
  nlohmann::json st = nlohmann::json::array();
  for (const auto& l : cfg.st_stage)
    st.push_back({{"channels", l.channels}, {"kernel", l.kernel}, {"stride", l.stride}});
  j = {{"frames", cfg.frames},
       {"height", cfg.height},
       {"width", cfg.width},
       {"channels", cfg.channels},
       {"st_stage", st},
       {"refine_widths", cfg.refine_widths},
       {"refine_blocks", cfg.refine_blocks},
       {"fusion_kernel", cfg.fusion_kernel},
       {"feature_dim", cfg.feature_dim},
       {"mlp_hidden", cfg.mlp_hidden},
       {"num_classes", cfg.num_classes}};
}

void from_json(const nlohmann::json& j, STNetConfig& cfg) {
  STNetConfig d;
  cfg.frames = j.value("frames", d.frames);
  cfg.height = j.value("height", d.height);
  cfg.width = j.value("width", d.width);
  cfg.channels = j.value("channels", d.channels);
  if (j.contains("st_stage")) {
    cfg.st_stage.clear();
    for (const auto& l : j.at("st_stage"))
      cfg.st_stage.push_back({l.at("channels").get<int>(), l.at("kernel").get<std::array<int, 3>>(),
                              l.value("stride", std::array<int, 3>{1, 1, 1})});
  }
  cfg.refine_widths = j.value("refine_widths", d.refine_widths);
  cfg.refine_blocks = j.value("refine_blocks", d.refine_blocks);
  cfg.fusion_kernel = j.value("fusion_kernel", d.fusion_kernel);
  cfg.feature_dim = j.value("feature_dim", d.feature_dim);
  cfg.mlp_hidden = j.value("mlp_hidden", d.mlp_hidden);
  cfg.num_classes = j.value("num_classes", d.num_classes);
}

std::string to_json(const STNetConfig& cfg) {
  nlohmann::json j;
  to_json(j, cfg);
  return j.dump();
}

STNetConfig stnet_config_from_json(std::string_view text) {
  STNetConfig cfg;
  try {
    from_json(nlohmann::json::parse(text), cfg);
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::kConfiguration, std::string("stnet config: ") + e.what());
  }
  cfg.validate();
  return cfg;
}

bool operator==(const STNetConfig& a, const STNetConfig& b) { return to_json(a) == to_json(b); }

std::string to_string(Head h) { return h == Head::kSoftmax ? "softmax" : "arcloss"; }

Head head_from_string(const std::string& s) {
  if (s == "softmax") return Head::kSoftmax;
  if (s == "arcloss") return Head::kArcLoss;
  fail(ErrorCode::kConfiguration, "unknown head '" + s + "' (expected softmax or arcloss)");
}

ClipTensor clip_from_frames(std::span<const cv::Mat> frames, const STNetConfig& cfg) {
  require(static_cast<int>(frames.size()) == cfg.frames, ErrorCode::kInvalidInput,
          "clip has " + std::to_string(frames.size()) + " frames, network expects " +
              std::to_string(cfg.frames));
  ClipTensor clip({cfg.channels, cfg.frames, cfg.height, cfg.width});
  const std::size_t plane = static_cast<std::size_t>(cfg.height) * cfg.width;
  for (int t = 0; t < cfg.frames; ++t) {
    cv::Mat f = frames[static_cast<std::size_t>(t)];
    require(!f.empty(), ErrorCode::kInvalidInput, "empty frame in clip");
    if (cfg.channels == 1 && f.channels() != 1) {
      cv::Mat g;
      cv::cvtColor(f, g, f.channels() == 4 ? cv::COLOR_BGRA2GRAY : cv::COLOR_BGR2GRAY);
      f = g;
    } else if (cfg.channels == 3 && f.channels() == 1) {
      cv::Mat c;
      cv::cvtColor(f, c, cv::COLOR_GRAY2BGR);
      f = c;
    }
    require(f.channels() == cfg.channels, ErrorCode::kInvalidInput, "frame channel count mismatch");
    if (f.cols != cfg.width || f.rows != cfg.height) {
      cv::Mat r;
      cv::resize(f, r, cv::Size(cfg.width, cfg.height), 0, 0, cv::INTER_AREA);
      f = r;
    }
    const double scale = f.depth() == CV_8U ? 1.0 / 255.0 : f.depth() == CV_16U ? 1.0 / 65535.0 : 1.0;
    cv::Mat fl;
    f.convertTo(fl, CV_MAKETYPE(CV_32F, cfg.channels), scale);
    for (int y = 0; y < cfg.height; ++y) {
      const float* row = fl.ptr<float>(y);
      for (int x = 0; x < cfg.width; ++x)
        for (int c = 0; c < cfg.channels; ++c)
          clip.data[(static_cast<std::size_t>(c) * cfg.frames + t) * plane +
                    static_cast<std::size_t>(y) * cfg.width + x] = row[x * cfg.channels + c];
    }
  }
  return clip;
}

// ---------------------------------------------------------------------------
// Network

namespace {

void init_normal(Tensor<float>& t, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> g(0.0, stddev);
  for (float& v : t.data) v = static_cast<float>(g(rng));
}

std::size_t fan_in(const std::vector<int>& shape) {
  std::size_t f = 1;
  for (std::size_t i = 1; i < shape.size(); ++i) f *= static_cast<std::size_t>(shape[i]);
  return f;
}

Tensor<float> from_matrix(const Eigen::MatrixXf& m) {
  Tensor<float> t({static_cast<int>(m.rows()), static_cast<int>(m.cols())});
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      t.data[static_cast<std::size_t>(r * m.cols() + c)] = m(r, c);
  return t;
}

Eigen::MatrixXf to_matrix(const Tensor<float>& t) {
  Eigen::MatrixXf m(t.dim(0), t.dim(1));
  for (int r = 0; r < t.dim(0); ++r)
    for (int c = 0; c < t.dim(1); ++c) m(r, c) = t.data[static_cast<std::size_t>(r) * t.dim(1) + c];
  return m;
}

}  // namespace

int STNet::add_param(std::string name, std::vector<int> shape) {
  Parameter p{std::move(name), Tensor<float>(shape), Tensor<float>(shape)};
  params_.push_back(std::move(p));
  return static_cast<int>(params_.size()) - 1;
}

STNet::ConvRef STNet::add_conv(const std::string& name, const nn::Conv3dSpec& spec) {
  ConvRef r;
  r.spec = spec;
  r.weight = add_param(name + ".weight", spec.weight_shape());
  r.bias = add_param(name + ".bias", {spec.out_channels});
  return r;
}

STNet::STNet(STNetConfig cfg, std::uint64_t seed) : cfg_(std::move(cfg)) {
  cfg_.validate();
  std::mt19937_64 rng(seed);
  auto he = [&](const ConvRef& r, double gain) {
    auto& w = params_[static_cast<std::size_t>(r.weight)].value;
    init_normal(w, std::sqrt(gain / static_cast<double>(fan_in(w.shape))), rng);
  };

  int c = cfg_.channels;
  for (std::size_t i = 0; i < cfg_.st_stage.size(); ++i) {
    const auto& l = cfg_.st_stage[i];
    nn::Conv3dSpec s{c, l.channels, l.kernel, l.stride, {l.kernel[0] / 2, l.kernel[1] / 2, l.kernel[2] / 2}};
    st_.push_back(add_conv("st." + std::to_string(i), s));
    he(st_.back(), 2.0);
    c = l.channels;
  }
  for (std::size_t s = 0; s < cfg_.refine_widths.size(); ++s) {
    const int width = cfg_.refine_widths[s];
    for (int b = 0; b < cfg_.refine_blocks[s]; ++b) {
      const int stride = (s > 0 && b == 0) ? 2 : 1;
      const std::string name = "refine." + std::to_string(s) + "." + std::to_string(b);
      Block blk;
      blk.conv1 = add_conv(name + ".conv1", {c, width, {1, 3, 3}, {1, stride, stride}, {0, 1, 1}});
      blk.conv2 = add_conv(name + ".conv2", {width, width, {1, 3, 3}, {1, 1, 1}, {0, 1, 1}});
      he(blk.conv1, 2.0);
      // conv2 starts at zero so every block begins as its shortcut.
      blk.projection = stride != 1 || c != width;
      if (blk.projection) {
        blk.shortcut = add_conv(name + ".shortcut", {c, width, {1, 1, 1}, {1, stride, stride}, {0, 0, 0}});
        he(blk.shortcut, 2.0);
      }
      blocks_.push_back(blk);
      c = width;
    }
  }
  fusion_ = add_conv("fusion", {c, cfg_.feature_dim, {cfg_.fusion_kernel, 1, 1}, {1, 1, 1},
                                {cfg_.fusion_kernel / 2, 0, 0}});
  he(fusion_, 1.0);

  int in = cfg_.feature_dim;
  std::vector<int> sizes = cfg_.mlp_hidden;
  sizes.push_back(cfg_.num_classes);
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    LinearRef l;
    l.weight = add_param("mlp." + std::to_string(i) + ".weight", {sizes[i], in});
    l.bias = add_param("mlp." + std::to_string(i) + ".bias", {sizes[i]});
    const bool last = i + 1 == sizes.size();
    init_normal(params_[static_cast<std::size_t>(l.weight)].value,
                std::sqrt((last ? 1.0 : 2.0) / in), rng);
    mlp_.push_back(l);
    in = sizes[i];
  }
}

Parameter& STNet::parameter(std::string_view name) {
  for (auto& p : params_)
    if (p.name == name) return p;
  fail(ErrorCode::kInvalidArgument, "no parameter named " + std::string(name));
}

const Parameter& STNet::parameter(std::string_view name) const {
  return const_cast<STNet*>(this)->parameter(name);
}

void STNet::zero_grad() {
  for (auto& p : params_) p.grad.fill(0.0f);
}

void STNet::attach_arc_head(const Eigen::MatrixXd& weight) {
  require(weight.rows() == cfg_.feature_dim && weight.cols() == cfg_.num_classes,
          ErrorCode::kInvalidArgument, "arc head must be feature_dim x num_classes");
  require(weight.allFinite(), ErrorCode::kInvalidArgument, "arc head has non-finite values");
  if (arc_index_ < 0) arc_index_ = add_param("arc.weight", {cfg_.feature_dim, cfg_.num_classes});
  auto& w = params_[static_cast<std::size_t>(arc_index_)].value;
  for (int r = 0; r < cfg_.feature_dim; ++r)
    for (int c = 0; c < cfg_.num_classes; ++c)
      w.data[static_cast<std::size_t>(r) * cfg_.num_classes + c] = static_cast<float>(weight(r, c));
}

Eigen::MatrixXd STNet::arc_weight() const {
  require(has_arc_head(), ErrorCode::kPrecondition, "network has no ArcLoss head");
  const auto& w = params_[static_cast<std::size_t>(arc_index_)].value;
  Eigen::MatrixXd m(cfg_.feature_dim, cfg_.num_classes);
  for (int r = 0; r < cfg_.feature_dim; ++r)
    for (int c = 0; c < cfg_.num_classes; ++c)
      m(r, c) = w.data[static_cast<std::size_t>(r) * cfg_.num_classes + c];
  return m;
}

ForwardOutput STNet::forward(std::span<const ClipTensor> clips) const {
  Tape tape;
  return forward(clips, tape);
}

ForwardOutput STNet::forward(std::span<const ClipTensor> clips, Tape& tape) const {
  require(!clips.empty(), ErrorCode::kInvalidInput, "forward: empty batch");
  const std::vector<int> clip_shape{cfg_.channels, cfg_.frames, cfg_.height, cfg_.width};
  const int b = static_cast<int>(clips.size());
  const std::size_t clip_size = Tensor<float>::count(clip_shape);
  Tensor<float> x({b, cfg_.channels, cfg_.frames, cfg_.height, cfg_.width});
  for (int i = 0; i < b; ++i) {
    require(clips[static_cast<std::size_t>(i)].shape == clip_shape, ErrorCode::kInvalidInput,
            "clip shape " + nn::shape_string(clips[static_cast<std::size_t>(i)].shape) +
                " does not match network input " + nn::shape_string(clip_shape));
    std::copy(clips[static_cast<std::size_t>(i)].data.begin(), clips[static_cast<std::size_t>(i)].data.end(),
              x.data.begin() + static_cast<std::ptrdiff_t>(i * clip_size));
  }

  auto param = [&](int idx) -> const Tensor<float>& { return params_[static_cast<std::size_t>(idx)].value; };
  auto conv = [&](const ConvRef& r, const Tensor<float>& in) {
    return nn::conv3d_forward(in, param(r.weight), &param(r.bias), r.spec);
  };

  tape = Tape{};
  tape.batch = b;
  for (const auto& r : st_) {
    tape.st_inputs.push_back(x);
    x = nn::relu_forward(conv(r, x));
    tape.st_outputs.push_back(x);
  }

  // Per-frame refinement: (B, C, T, H, W) -> (B*T, C, 1, H, W).
  Tensor<float> f = nn::swap_axes_12(x);
  f.shape = {b * cfg_.frames, x.dim(1), 1, x.dim(3), x.dim(4)};
  for (const auto& blk : blocks_) {
    Tape::BlockTape bt;
    bt.input = f;
    bt.hidden = nn::relu_forward(conv(blk.conv1, f));
    Tensor<float> out = conv(blk.conv2, bt.hidden);
    nn::add_inplace(out, blk.projection ? conv(blk.shortcut, f) : f);
    bt.output = nn::relu_forward(out);
    f = bt.output;
    tape.blocks.push_back(std::move(bt));
  }
  tape.refine_shape = f.shape;

  const int cprime = f.dim(1);
  const std::size_t spatial = static_cast<std::size_t>(f.dim(3)) * f.dim(4);
  const Tensor<float> z = nn::mean_inner(f, spatial, {b, cfg_.frames, cprime, 1, 1});
  tape.fusion_input = nn::swap_axes_12(z);
  tape.fusion_output = conv(fusion_, tape.fusion_input);
  tape.features = nn::mean_inner(tape.fusion_output, static_cast<std::size_t>(cfg_.frames),
                                 {b, cfg_.feature_dim});

  Tensor<float> h = tape.features;
  for (std::size_t i = 0; i < mlp_.size(); ++i) {
    tape.mlp_inputs.push_back(h);
    h = nn::linear_forward(h, param(mlp_[i].weight), &param(mlp_[i].bias));
    if (i + 1 < mlp_.size()) h = nn::relu_forward(h);
  }
  tape.logits = h;
  return {to_matrix(tape.features), to_matrix(tape.logits)};
}

void STNet::backward(const Tape& tape, const Eigen::MatrixXf& grad_features,
                     const Eigen::MatrixXf& grad_logits) {
  const int b = tape.batch;
  auto& P = params_;
  auto conv_back = [&](const ConvRef& r, const Tensor<float>& in, const Tensor<float>& gy) {
    return nn::conv3d_backward(in, P[static_cast<std::size_t>(r.weight)].value, gy, r.spec,
                               P[static_cast<std::size_t>(r.weight)].grad,
                               &P[static_cast<std::size_t>(r.bias)].grad);
  };

  Tensor<float> g_feat({b, cfg_.feature_dim});
  if (grad_features.size() > 0) {
    require(grad_features.rows() == b && grad_features.cols() == cfg_.feature_dim,
            ErrorCode::kInvalidArgument, "backward: feature gradient shape mismatch");
    g_feat = from_matrix(grad_features);
  }
  if (grad_logits.size() > 0) {
    require(grad_logits.rows() == b && grad_logits.cols() == cfg_.num_classes,
            ErrorCode::kInvalidArgument, "backward: logit gradient shape mismatch");
    Tensor<float> g = from_matrix(grad_logits);
    for (std::size_t i = mlp_.size(); i-- > 0;) {
      const auto& l = mlp_[i];
      Tensor<float> gx = nn::linear_backward(tape.mlp_inputs[i], P[static_cast<std::size_t>(l.weight)].value, g,
                                             P[static_cast<std::size_t>(l.weight)].grad,
                                             &P[static_cast<std::size_t>(l.bias)].grad);
      g = i > 0 ? nn::relu_backward(tape.mlp_inputs[i], gx) : gx;
    }
    nn::add_inplace(g_feat, g);
  }

  const Tensor<float> g_fout = nn::mean_inner_backward(g_feat, static_cast<std::size_t>(cfg_.frames),
                                                       tape.fusion_output.shape);
  const Tensor<float> g_fin = conv_back(fusion_, tape.fusion_input, g_fout);
  const Tensor<float> g_z = nn::swap_axes_12(g_fin);
  const auto& rs = tape.refine_shape;
  Tensor<float> g = nn::mean_inner_backward(g_z, static_cast<std::size_t>(rs[3]) * rs[4], rs);

  for (std::size_t i = blocks_.size(); i-- > 0;) {
    const auto& blk = blocks_[i];
    const auto& bt = tape.blocks[i];
    const Tensor<float> g_out = nn::relu_backward(bt.output, g);
    const Tensor<float> g_hidden = nn::relu_backward(bt.hidden, conv_back(blk.conv2, bt.hidden, g_out));
    Tensor<float> g_in = conv_back(blk.conv1, bt.input, g_hidden);
    nn::add_inplace(g_in, blk.projection ? conv_back(blk.shortcut, bt.input, g_out) : g_out);
    g = std::move(g_in);
  }

  const auto& last = tape.st_outputs.back();
  g.shape = {b, cfg_.frames, last.dim(1), last.dim(3), last.dim(4)};
  g = nn::swap_axes_12(g);
  for (std::size_t i = st_.size(); i-- > 0;) {
    g = nn::relu_backward(tape.st_outputs[i], g);
    g = conv_back(st_[i], tape.st_inputs[i], g);
  }
}

Eigen::MatrixXf STNet::scores(const ForwardOutput& out, Head head) const {
  if (head == Head::kSoftmax) return out.logits;
  const Eigen::MatrixXd w = arc_weight().colwise().normalized();
  Eigen::MatrixXd f = out.features.cast<double>();
  for (Eigen::Index r = 0; r < f.rows(); ++r) {
    const double n = f.row(r).norm();
    if (n > 0) f.row(r) /= n;
  }
  return (f * w).cast<float>();
}

std::string STNet::fingerprint() const {
  Fnv1a h;
  h.update(to_json(cfg_));
  for (const auto& p : params_) {
    h.update(p.name);
    h.update(std::string_view(reinterpret_cast<const char*>(p.value.ptr()), p.value.size() * sizeof(float)));
  }
  return "stnet:" + h.hex();
}

}  // namespace thbench::stnet
