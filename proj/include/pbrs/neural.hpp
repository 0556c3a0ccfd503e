#pragma once

// Fully connected networks with ReLU hidden layers, reverse-mode gradients and
// Adam. Training runs in float; the same template instantiated with double is
// used for finite-difference gradient checks.
//
// Batched tensors are column-major with one sample per column.

#include <Eigen/Dense>

#include <bit>
#include <cmath>
#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "pbrs/error.hpp"
#include "pbrs/rng.hpp"

namespace pbrs {

enum class OutputActivation { kIdentity, kTanh };

struct AdamParams {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

template <typename Scalar>
class Mlp {
 public:
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

  struct Layer {
    Matrix weight;  // out x in
    Vector bias;    // out
  };

  struct Gradients {
    std::vector<Layer> layers;
    Matrix input_grad;  // in x batch
  };

  /// Post-activation values of every layer; `values[0]` is the input.
  struct Tape {
    std::vector<Matrix> values;
  };

  Mlp() = default;

  /// `topology` lists layer widths including input and output. Weights and
  /// biases are drawn uniformly from +-1/sqrt(fan_in).
  Mlp(std::vector<int> topology, OutputActivation output, std::uint64_t seed)
      : topology_(std::move(topology)), output_(output) {
    if (topology_.size() < 2) throw ShapeError("Mlp: topology needs at least input and output");
    for (int w : topology_)
      if (w <= 0) throw ShapeError("Mlp: layer widths must be positive");
    SplitMix64 rng(seed);
    layers_.resize(topology_.size() - 1);
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const int in = topology_[l];
      const int out = topology_[l + 1];
      const double bound = 1.0 / std::sqrt(static_cast<double>(in));
      Layer& layer = layers_[l];
      layer.weight.resize(out, in);
      layer.bias.resize(out);
      // Row-major draw order so the parameter stream matches the checkpoint layout.
      for (int r = 0; r < out; ++r)
        for (int c = 0; c < in; ++c) layer.weight(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
      for (int r = 0; r < out; ++r) layer.bias(r) = static_cast<Scalar>(rng.uniform(-bound, bound));
    }
    reset_optimizer();
  }

  const std::vector<int>& topology() const { return topology_; }
  OutputActivation output_activation() const { return output_; }
  int input_size() const { return topology_.front(); }
  int output_size() const { return topology_.back(); }
  std::vector<Layer>& layers() { return layers_; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::int64_t adam_steps() const { return adam_steps_; }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const Layer& l : layers_) n += l.weight.size() + l.bias.size();
    return n;
  }

  void reset_optimizer() {
    first_moment_ = zeros_like();
    second_moment_ = zeros_like();
    adam_steps_ = 0;
  }

  Vector forward(const Vector& x) const {
    Matrix in = x;
    return forward_batch(in).col(0);
  }

  Matrix forward_batch(const Matrix& x) const {
    check_input(x);
    Matrix a = x;
    for (std::size_t l = 0; l < layers_.size(); ++l) a = apply_layer(l, a);
    return a;
  }

  Matrix forward_batch(const Matrix& x, Tape& tape) const {
    check_input(x);
    tape.values.resize(layers_.size() + 1);
    tape.values[0] = x;
    for (std::size_t l = 0; l < layers_.size(); ++l)
      tape.values[l + 1] = apply_layer(l, tape.values[l]);
    return tape.values.back();
  }

  /// Gradients of sum_j upstream(:, j) . output(:, j) with respect to every
  /// parameter (summed over the batch) and to the input.
  Gradients backward(const Tape& tape, const Matrix& upstream) const {
    if (tape.values.size() != layers_.size() + 1)
      throw ShapeError("Mlp::backward: tape does not belong to this network");
    const Matrix& out = tape.values.back();
    if (upstream.rows() != out.rows() || upstream.cols() != out.cols())
      throw ShapeError("Mlp::backward: upstream gradient shape " + shape(upstream) +
                       " does not match output " + shape(out));

    Gradients g;
    g.layers.resize(layers_.size());
    Matrix delta = upstream;
    if (output_ == OutputActivation::kTanh)
      delta.array() *= (Scalar(1) - out.array().square());
    for (std::size_t l = layers_.size(); l-- > 0;) {
      const Matrix& prev = tape.values[l];
      g.layers[l].weight.noalias() = delta * prev.transpose();
      g.layers[l].bias = delta.rowwise().sum();
      Matrix next = layers_[l].weight.transpose() * delta;
      if (l > 0) next.array() *= (prev.array() > Scalar(0)).template cast<Scalar>();
      delta = std::move(next);
    }
    g.input_grad = std::move(delta);
    return g;
  }

  /// One Adam update: theta -= lr * m_hat / (sqrt(v_hat) + eps).
  void adam_step(const Gradients& grads, double lr, const AdamParams& p = {}) {
    check_gradients(grads);
    ++adam_steps_;
    const double t = static_cast<double>(adam_steps_);
    const Scalar b1 = static_cast<Scalar>(p.beta1);
    const Scalar b2 = static_cast<Scalar>(p.beta2);
    const Scalar c1 = static_cast<Scalar>(1.0 / (1.0 - std::pow(p.beta1, t)));
    const Scalar c2 = static_cast<Scalar>(1.0 / (1.0 - std::pow(p.beta2, t)));
    const Scalar rate = static_cast<Scalar>(lr);
    const Scalar eps = static_cast<Scalar>(p.epsilon);
    auto update = [&](auto& param, auto& m, auto& v, const auto& g) {
      m.array() = b1 * m.array() + (Scalar(1) - b1) * g.array();
      v.array() = b2 * v.array() + (Scalar(1) - b2) * g.array().square();
      param.array() -= rate * (m.array() * c1) / ((v.array() * c2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      update(layers_[l].weight, first_moment_[l].weight, second_moment_[l].weight,
             grads.layers[l].weight);
      update(layers_[l].bias, first_moment_[l].bias, second_moment_[l].bias, grads.layers[l].bias);
    }
  }

  template <typename To>
  Mlp<To> cast() const {
    Mlp<To> out;
    out.topology_ = topology_;
    out.output_ = output_;
    out.layers_.resize(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      out.layers_[l].weight = layers_[l].weight.template cast<To>();
      out.layers_[l].bias = layers_[l].bias.template cast<To>();
    }
    out.reset_optimizer();
    return out;
  }

  bool same_topology(const Mlp& other) const { return topology_ == other.topology_; }

 private:
  template <typename>
  friend class Mlp;

  Matrix apply_layer(std::size_t l, const Matrix& in) const {
    Matrix z = layers_[l].weight * in;
    z.colwise() += layers_[l].bias;
    if (l + 1 < layers_.size()) {
      z = z.cwiseMax(Scalar(0));
    } else if (output_ == OutputActivation::kTanh) {
      z = z.array().tanh();
    }
    return z;
  }

  void check_input(const Matrix& x) const {
    if (layers_.empty()) throw ShapeError("Mlp: network is empty");
    if (x.rows() != topology_.front())
      throw ShapeError("Mlp: input has " + std::to_string(x.rows()) + " rows, expected " +
                       std::to_string(topology_.front()));
  }

  void check_gradients(const Gradients& g) const {
    if (g.layers.size() != layers_.size()) throw ShapeError("Mlp::adam_step: layer count mismatch");
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      const Layer& gl = g.layers[l];
      if (gl.weight.rows() != layers_[l].weight.rows() ||
          gl.weight.cols() != layers_[l].weight.cols() || gl.bias.size() != layers_[l].bias.size())
        throw ShapeError("Mlp::adam_step: gradient shape mismatch in layer " + std::to_string(l));
      if (!gl.weight.allFinite() || !gl.bias.allFinite())
        throw ContractError("Mlp::adam_step: non-finite gradient in layer " + std::to_string(l) +
                            "; update rejected");
    }
  }

  std::vector<Layer> zeros_like() const {
    std::vector<Layer> z(layers_.size());
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      z[l].weight = Matrix::Zero(layers_[l].weight.rows(), layers_[l].weight.cols());
      z[l].bias = Vector::Zero(layers_[l].bias.size());
    }
    return z;
  }

  static std::string shape(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
  }

  std::vector<int> topology_;
  OutputActivation output_ = OutputActivation::kIdentity;
  std::vector<Layer> layers_;
  std::vector<Layer> first_moment_;
  std::vector<Layer> second_moment_;
  std::int64_t adam_steps_ = 0;
};

/// target <- (1 - tau) * target + tau * online, elementwise.
template <typename Scalar>
void soft_update(Mlp<Scalar>& target, const Mlp<Scalar>& online, double tau) {
  if (!target.same_topology(online)) throw ShapeError("soft_update: topology mismatch");
  if (!(tau >= 0.0 && tau <= 1.0)) throw ConfigError("soft_update: tau must be in [0, 1]");
  const Scalar t = static_cast<Scalar>(tau);
  const Scalar keep = static_cast<Scalar>(1.0 - tau);
  for (std::size_t l = 0; l < target.layers().size(); ++l) {
    auto& dst = target.layers()[l];
    const auto& src = online.layers()[l];
    if (tau == 1.0) {
      dst.weight = src.weight;
      dst.bias = src.bias;
    } else if (tau != 0.0) {
      dst.weight = keep * dst.weight + t * src.weight;
      dst.bias = keep * dst.bias + t * src.bias;
    }
  }
}

// Checkpoint format: "MLP1", u32 layer count, u32 widths, then for each layer
// the weight matrix row-major followed by the bias, all little-endian float32.

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
  const char b[4] = {static_cast<char>(v & 0xFF), static_cast<char>((v >> 8) & 0xFF),
                     static_cast<char>((v >> 16) & 0xFF), static_cast<char>((v >> 24) & 0xFF)};
  os.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) throw DataError("checkpoint truncated");
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

}  // namespace detail

inline void save_mlp(const Mlp<float>& net, std::ostream& os) {
  os.write("MLP1", 4);
  detail::put_u32(os, static_cast<std::uint32_t>(net.topology().size()));
  for (int w : net.topology()) detail::put_u32(os, static_cast<std::uint32_t>(w));
  for (const auto& layer : net.layers()) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        detail::put_u32(os, std::bit_cast<std::uint32_t>(layer.weight(r, c)));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r)
      detail::put_u32(os, std::bit_cast<std::uint32_t>(layer.bias(r)));
  }
}

/// The output activation is not part of the file; the caller knows whether it
/// is loading an actor or a critic.
inline Mlp<float> load_mlp(std::istream& is, OutputActivation output) {
  char magic[4];
  if (!is.read(magic, 4) || std::string(magic, 4) != "MLP1")
    throw DataError("not an MLP1 checkpoint (bad magic bytes)");
  const std::uint32_t count = detail::get_u32(is);
  if (count < 2 || count > 1024) throw DataError("checkpoint has an implausible layer count");
  std::vector<int> topology(count);
  for (auto& w : topology) {
    const std::uint32_t v = detail::get_u32(is);
    if (v == 0 || v > (1u << 20)) throw DataError("checkpoint has an implausible layer width");
    w = static_cast<int>(v);
  }
  Mlp<float> net(topology, output, 0);
  for (auto& layer : net.layers()) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r)
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c)
        layer.weight(r, c) = std::bit_cast<float>(detail::get_u32(is));
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r)
      layer.bias(r) = std::bit_cast<float>(detail::get_u32(is));
  }
  return net;
}

}  // namespace pbrs
