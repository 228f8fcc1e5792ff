#pragma once

// Dense feedforward networks with explicit reverse-mode gradients.
// Batches are stored one sample per column.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ventctl/dynamics.hpp"

namespace ventctl {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;

enum class Activation : std::uint8_t { kLinear, kTanh };

const char* activation_name(Activation act);
Activation activation_from_name(const std::string& name);

struct DenseLayer {
  Mat weights;  // out x in
  Vec bias;     // out
  Activation activation = Activation::kLinear;

  std::size_t inputs() const { return static_cast<std::size_t>(weights.cols()); }
  std::size_t outputs() const { return static_cast<std::size_t>(weights.rows()); }
};

/// Primal values recorded by a forward pass. Only valid for the network
/// generation that produced it.
struct Tape {
  std::uint64_t net_id = 0;
  std::uint64_t generation = 0;
  std::vector<Mat> values;  // input, then each layer's activated output
};

struct MlpGradients {
  std::vector<Mat> weights;
  std::vector<Vec> bias;

  void set_zero();
  void add(const MlpGradients& other, double scale = 1.0);
  std::size_t size() const;
  std::vector<double> flatten() const;
};

class Mlp {
 public:
  Mlp() = default;
  /// widths = {input, hidden..., output}; tanh hidden, linear output, weights
  /// and biases drawn from U(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  Mlp(std::span<const std::size_t> widths, Rng& rng);
  explicit Mlp(std::vector<DenseLayer> layers);

  Mlp(const Mlp& other);
  Mlp& operator=(const Mlp& other);
  Mlp(Mlp&&) noexcept = default;
  Mlp& operator=(Mlp&&) noexcept = default;

  std::size_t input_size() const;
  std::size_t output_size() const;
  std::size_t depth() const { return layers_.size(); }
  std::size_t parameter_count() const;
  std::vector<std::size_t> widths() const;

  const std::vector<DenseLayer>& layers() const { return layers_; }
  /// Mutable access invalidates outstanding tapes.
  std::vector<DenseLayer>& mutable_layers();

  std::uint64_t id() const { return id_; }
  std::uint64_t generation() const { return generation_; }

  Mat forward(const Mat& x, Tape* tape = nullptr) const;
  Vec forward(const Vec& x, Tape* tape = nullptr) const;
  double forward_scalar(std::span<const double> x, Tape* tape = nullptr) const;

  MlpGradients zero_gradients() const;

  std::vector<double> parameters() const;  // layer by layer, weights row-major then bias
  void set_parameters(std::span<const double> flat);

  /// Sets the last layer's weights and bias to zero.
  void zero_output_layer();

 private:
  static std::uint64_t next_id();

  std::vector<DenseLayer> layers_;
  std::uint64_t id_ = next_id();
  std::uint64_t generation_ = 0;
};

struct BackwardResult {
  Mat dx;
  MlpGradients grads;
};

/// Gradients of sum(y .* dy) for the forward recorded in `tape`.
BackwardResult backward(const Mlp& net, const Tape& tape, const Mat& dy);

/// As backward, adding parameter gradients into `grads`; returns dx.
Mat backward_accumulate(const Mlp& net, const Tape& tape, const Mat& dy,
                        MlpGradients& grads);

/// theta <- theta - lr * (grad + weight_decay * theta)
void sgd_step(Mlp& net, const MlpGradients& grads, double lr,
              double weight_decay = 0.0);

/// Cosine-annealed learning rate for a zero-based epoch index.
double cosine_lr(double lr0, std::size_t epoch, std::size_t epochs);

nlohmann::json to_json(const Mlp& net);
Mlp mlp_from_json(const nlohmann::json& j);

}  // namespace ventctl
