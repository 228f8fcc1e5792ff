#include "ventctl/nnet.hpp"

#include <atomic>
#include <cmath>
#include <numbers>

#include "ventctl/errors.hpp"

namespace ventctl {

using nlohmann::json;

namespace {

constexpr int kFormatVersion = 1;

void check_layers(const std::vector<DenseLayer>& layers) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const DenseLayer& l = layers[i];
    if (l.bias.size() != l.weights.rows()) {
      throw ShapeMismatch("layer " + std::to_string(i) + ": bias length differs from weight rows");
    }
    if (i > 0 && l.inputs() != layers[i - 1].outputs()) {
      throw ShapeMismatch("layer " + std::to_string(i) + " does not conform to its predecessor");
    }
    if (!l.weights.allFinite() || !l.bias.allFinite()) {
      throw ConfigInvalid("network parameters must be finite");
    }
  }
}

}  // namespace

const char* activation_name(Activation act) {
  return act == Activation::kTanh ? "tanh" : "linear";
}

Activation activation_from_name(const std::string& name) {
  if (name == "tanh") return Activation::kTanh;
  if (name == "linear") return Activation::kLinear;
  throw ConfigInvalid("unknown activation '" + name + "'");
}

void MlpGradients::set_zero() {
  for (Mat& w : weights) w.setZero();
  for (Vec& b : bias) b.setZero();
}

void MlpGradients::add(const MlpGradients& other, double scale) {
  if (other.weights.size() != weights.size()) {
    throw ShapeMismatch("gradient sets have different depth");
  }
  for (std::size_t i = 0; i < weights.size(); ++i) {
    weights[i] += scale * other.weights[i];
    bias[i] += scale * other.bias[i];
  }
}

std::size_t MlpGradients::size() const {
  std::size_t n = 0;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    n += static_cast<std::size_t>(weights[i].size() + bias[i].size());
  }
  return n;
}

std::vector<double> MlpGradients::flatten() const {
  std::vector<double> out;
  out.reserve(size());
  for (std::size_t i = 0; i < weights.size(); ++i) {
    for (Eigen::Index r = 0; r < weights[i].rows(); ++r) {
      for (Eigen::Index c = 0; c < weights[i].cols(); ++c) out.push_back(weights[i](r, c));
    }
    for (Eigen::Index r = 0; r < bias[i].size(); ++r) out.push_back(bias[i](r));
  }
  return out;
}

std::uint64_t Mlp::next_id() {
  static std::atomic<std::uint64_t> counter{1};
  return counter.fetch_add(1, std::memory_order_relaxed);
}

Mlp::Mlp(std::span<const std::size_t> widths, Rng& rng) {
  if (widths.size() < 2) throw ShapeMismatch("a network needs input and output widths");
  for (std::size_t w : widths) {
    if (w == 0) throw ShapeMismatch("layer widths must be positive");
  }
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    const auto in = static_cast<Eigen::Index>(widths[i]);
    const auto out = static_cast<Eigen::Index>(widths[i + 1]);
    const double bound = 1.0 / std::sqrt(static_cast<double>(in));
    std::uniform_real_distribution<double> dist(-bound, bound);
    DenseLayer layer;
    layer.weights.resize(out, in);
    layer.bias.resize(out);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) layer.weights(r, c) = dist(rng);
    }
    for (Eigen::Index r = 0; r < out; ++r) layer.bias(r) = dist(rng);
    layer.activation = i + 2 < widths.size() ? Activation::kTanh : Activation::kLinear;
    layers_.push_back(std::move(layer));
  }
}

Mlp::Mlp(std::vector<DenseLayer> layers) : layers_(std::move(layers)) {
  if (layers_.empty()) throw ShapeMismatch("a network needs at least one layer");
  check_layers(layers_);
}

Mlp::Mlp(const Mlp& other) : layers_(other.layers_) {}

Mlp& Mlp::operator=(const Mlp& other) {
  if (this != &other) {
    layers_ = other.layers_;
    ++generation_;
  }
  return *this;
}

std::size_t Mlp::input_size() const {
  return layers_.empty() ? 0 : layers_.front().inputs();
}

std::size_t Mlp::output_size() const {
  return layers_.empty() ? 0 : layers_.back().outputs();
}

std::size_t Mlp::parameter_count() const {
  std::size_t n = 0;
  for (const DenseLayer& l : layers_) {
    n += static_cast<std::size_t>(l.weights.size() + l.bias.size());
  }
  return n;
}

std::vector<std::size_t> Mlp::widths() const {
  std::vector<std::size_t> out;
  if (layers_.empty()) return out;
  out.push_back(input_size());
  for (const DenseLayer& l : layers_) out.push_back(l.outputs());
  return out;
}

std::vector<DenseLayer>& Mlp::mutable_layers() {
  ++generation_;
  return layers_;
}

Mat Mlp::forward(const Mat& x, Tape* tape) const {
  if (layers_.empty()) throw ShapeMismatch("forward on an empty network");
  if (static_cast<std::size_t>(x.rows()) != input_size()) {
    throw ShapeMismatch("input has " + std::to_string(x.rows()) + " rows, network expects " +
                        std::to_string(input_size()));
  }
  if (tape) {
    tape->net_id = id_;
    tape->generation = generation_;
    tape->values.clear();
    tape->values.reserve(layers_.size() + 1);
    tape->values.push_back(x);
  }
  Mat h = x;
  for (const DenseLayer& l : layers_) {
    Mat z = l.weights * h;
    z.colwise() += l.bias;
    if (l.activation == Activation::kTanh) z = z.array().tanh().matrix();
    h = std::move(z);
    if (tape) tape->values.push_back(h);
  }
  return h;
}

Vec Mlp::forward(const Vec& x, Tape* tape) const {
  const Mat out = forward(static_cast<const Mat&>(x), tape);
  return out.col(0);
}

double Mlp::forward_scalar(std::span<const double> x, Tape* tape) const {
  if (output_size() != 1) throw ShapeMismatch("forward_scalar needs a single output");
  const Eigen::Map<const Vec> in(x.data(), static_cast<Eigen::Index>(x.size()));
  return forward(Vec(in), tape)(0);
}

MlpGradients Mlp::zero_gradients() const {
  MlpGradients g;
  for (const DenseLayer& l : layers_) {
    g.weights.push_back(Mat::Zero(l.weights.rows(), l.weights.cols()));
    g.bias.push_back(Vec::Zero(l.bias.size()));
  }
  return g;
}

std::vector<double> Mlp::parameters() const {
  std::vector<double> out;
  out.reserve(parameter_count());
  for (const DenseLayer& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) out.push_back(l.weights(r, c));
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) out.push_back(l.bias(r));
  }
  return out;
}

void Mlp::set_parameters(std::span<const double> flat) {
  if (flat.size() != parameter_count()) {
    throw ShapeMismatch("parameter vector has the wrong length");
  }
  ++generation_;
  std::size_t k = 0;
  for (DenseLayer& l : layers_) {
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) l.weights(r, c) = flat[k++];
    }
    for (Eigen::Index r = 0; r < l.bias.size(); ++r) l.bias(r) = flat[k++];
  }
}

void Mlp::zero_output_layer() {
  if (layers_.empty()) return;
  ++generation_;
  layers_.back().weights.setZero();
  layers_.back().bias.setZero();
}

Mat backward_accumulate(const Mlp& net, const Tape& tape, const Mat& dy,
                        MlpGradients& grads) {
  const auto& layers = net.layers();
  if (tape.net_id != net.id() || tape.generation != net.generation() ||
      tape.values.size() != layers.size() + 1) {
    throw StaleTape("tape was not recorded by this network in its current state");
  }
  if (grads.weights.size() != layers.size()) {
    throw ShapeMismatch("gradient set does not match the network");
  }
  if (dy.rows() != tape.values.back().rows() || dy.cols() != tape.values.back().cols()) {
    throw ShapeMismatch("output gradient shape differs from the recorded output");
  }
  Mat g = dy;
  for (std::size_t i = layers.size(); i-- > 0;) {
    const DenseLayer& l = layers[i];
    if (l.activation == Activation::kTanh) {
      const Mat& y = tape.values[i + 1];
      g = (g.array() * (1.0 - y.array().square())).matrix();
    }
    grads.weights[i].noalias() += g * tape.values[i].transpose();
    grads.bias[i] += g.rowwise().sum();
    g = l.weights.transpose() * g;
  }
  return g;
}

BackwardResult backward(const Mlp& net, const Tape& tape, const Mat& dy) {
  BackwardResult out;
  out.grads = net.zero_gradients();
  out.dx = backward_accumulate(net, tape, dy, out.grads);
  return out;
}

void sgd_step(Mlp& net, const MlpGradients& grads, double lr, double weight_decay) {
  auto& layers = net.mutable_layers();
  if (grads.weights.size() != layers.size()) {
    throw ShapeMismatch("gradient set does not match the network");
  }
  for (std::size_t i = 0; i < layers.size(); ++i) {
    DenseLayer& l = layers[i];
    if (grads.weights[i].rows() != l.weights.rows() ||
        grads.weights[i].cols() != l.weights.cols() ||
        grads.bias[i].size() != l.bias.size()) {
      throw ShapeMismatch("gradient shape differs from layer " + std::to_string(i));
    }
    l.weights -= lr * (grads.weights[i] + weight_decay * l.weights);
    l.bias -= lr * (grads.bias[i] + weight_decay * l.bias);
  }
}

double cosine_lr(double lr0, std::size_t epoch, std::size_t epochs) {
  if (epochs == 0) return lr0;
  const double frac = static_cast<double>(epoch) / static_cast<double>(epochs);
  return lr0 * 0.5 * (1.0 + std::cos(std::numbers::pi * frac));
}

json to_json(const Mlp& net) {
  json layers = json::array();
  for (const DenseLayer& l : net.layers()) {
    std::vector<double> w;
    w.reserve(static_cast<std::size_t>(l.weights.size()));
    for (Eigen::Index r = 0; r < l.weights.rows(); ++r) {
      for (Eigen::Index c = 0; c < l.weights.cols(); ++c) w.push_back(l.weights(r, c));
    }
    layers.push_back({{"inputs", l.inputs()},
                      {"outputs", l.outputs()},
                      {"activation", activation_name(l.activation)},
                      {"weights", w},
                      {"bias", std::vector<double>(l.bias.data(), l.bias.data() + l.bias.size())}});
  }
  return json{{"format", "ventctl-mlp"}, {"version", kFormatVersion}, {"layers", layers}};
}

Mlp mlp_from_json(const json& j) {
  try {
    if (j.at("format").get<std::string>() != "ventctl-mlp") {
      throw ConfigInvalid("not a network file");
    }
    if (j.at("version").get<int>() != kFormatVersion) {
      throw ConfigInvalid("unsupported network format version");
    }
    std::vector<DenseLayer> layers;
    for (const json& lj : j.at("layers")) {
      const auto in = lj.at("inputs").get<Eigen::Index>();
      const auto out = lj.at("outputs").get<Eigen::Index>();
      const auto w = lj.at("weights").get<std::vector<double>>();
      const auto b = lj.at("bias").get<std::vector<double>>();
      if (static_cast<Eigen::Index>(w.size()) != in * out ||
          static_cast<Eigen::Index>(b.size()) != out) {
        throw ShapeMismatch("serialized layer has inconsistent sizes");
      }
      DenseLayer l;
      l.weights.resize(out, in);
      for (Eigen::Index r = 0; r < out; ++r) {
        for (Eigen::Index c = 0; c < in; ++c) l.weights(r, c) = w[static_cast<std::size_t>(r * in + c)];
      }
      l.bias = Eigen::Map<const Vec>(b.data(), out);
      l.activation = activation_from_name(lj.at("activation").get<std::string>());
      layers.push_back(std::move(l));
    }
    return Mlp(std::move(layers));
  } catch (const json::exception& e) {
    throw ConfigInvalid(std::string("malformed network file: ") + e.what());
  }
}

}  // namespace ventctl
