#pragma once

// Dense feed-forward network with exact backprop, templated on scalar type.
// Each dense layer's output neuron is one prunable weight group: its row of
// the weight matrix plus its bias.

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <vector>

#include "mpfl/arch.hpp"
#include "mpfl/mask.hpp"
#include "mpfl/rng.hpp"

namespace mpfl {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct DenseParams {
  Matrix<Scalar> weight;  // out x in
  Vector<Scalar> bias;    // out

  bool operator==(const DenseParams&) const = default;
};

template <typename Scalar>
class ModelParams {
 public:
  ModelParams() = default;

  /// Zero-valued parameters for `arch`.
  explicit ModelParams(ArchSpec arch) : arch_(std::move(arch)) {
    for (const auto& l : arch_.dense_layers()) {
      const auto out = static_cast<Eigen::Index>(l.out_dim), in = static_cast<Eigen::Index>(l.in_dim);
      layers_.push_back({Matrix<Scalar>::Zero(out, in), Vector<Scalar>::Zero(out)});
    }
  }

  /// Weights ~ U(-a, a) with a = sqrt(6 / (in + out)); biases zero.
  static ModelParams initialized(const ArchSpec& arch, Rng& rng) {
    ModelParams p(arch);
    for (auto& layer : p.layers_) {
      const double a = std::sqrt(6.0 / static_cast<double>(layer.weight.rows() + layer.weight.cols()));
      for (Eigen::Index j = 0; j < layer.weight.cols(); ++j)
        for (Eigen::Index i = 0; i < layer.weight.rows(); ++i)
          layer.weight(i, j) = static_cast<Scalar>(rng.uniform(-a, a));
    }
    return p;
  }

  const ArchSpec& arch() const noexcept { return arch_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  const DenseParams<Scalar>& layer(std::size_t m) const { return layers_.at(m); }
  DenseParams<Scalar>& layer(std::size_t m) { return layers_.at(m); }
  const std::vector<DenseParams<Scalar>>& layers() const noexcept { return layers_; }

  std::size_t parameter_count() const {
    std::size_t d = 0;
    for (const auto& l : layers_) d += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return d;
  }

  /// Group l of layer m: incoming weights followed by the bias.
  Vector<Scalar> group(std::size_t m, Eigen::Index l) const {
    const auto& layer = layers_.at(m);
    Vector<Scalar> g(layer.weight.cols() + 1);
    g.head(layer.weight.cols()) = layer.weight.row(l).transpose();
    g(layer.weight.cols()) = layer.bias(l);
    return g;
  }

  bool all_finite() const {
    for (const auto& l : layers_)
      if (!l.weight.allFinite() || !l.bias.allFinite()) return false;
    return true;
  }

  bool same_shape(const ModelParams& o) const {
    if (layers_.size() != o.layers_.size()) return false;
    for (std::size_t m = 0; m < layers_.size(); ++m)
      if (layers_[m].weight.rows() != o.layers_[m].weight.rows() ||
          layers_[m].weight.cols() != o.layers_[m].weight.cols())
        return false;
    return true;
  }

  /// Flat view in layer order: row-major weights of each neuron then its bias.
  Vector<Scalar> flat() const {
    Vector<Scalar> out(static_cast<Eigen::Index>(parameter_count()));
    Eigen::Index at = 0;
    for (std::size_t m = 0; m < layers_.size(); ++m)
      for (Eigen::Index l = 0; l < layers_[m].weight.rows(); ++l) {
        const auto g = group(m, l);
        out.segment(at, g.size()) = g;
        at += g.size();
      }
    return out;
  }

  void set_flat(const Vector<Scalar>& v) {
    if (static_cast<std::size_t>(v.size()) != parameter_count()) throw ConfigError("model: flat vector size mismatch");
    Eigen::Index at = 0;
    for (auto& layer : layers_)
      for (Eigen::Index l = 0; l < layer.weight.rows(); ++l) {
        layer.weight.row(l) = v.segment(at, layer.weight.cols()).transpose();
        at += layer.weight.cols();
        layer.bias(l) = v(at++);
      }
  }

  ModelParams& operator+=(const ModelParams& o) {
    require_same_shape(o);
    for (std::size_t m = 0; m < layers_.size(); ++m) {
      layers_[m].weight += o.layers_[m].weight;
      layers_[m].bias += o.layers_[m].bias;
    }
    return *this;
  }

  ModelParams& operator*=(Scalar s) {
    for (auto& l : layers_) {
      l.weight *= s;
      l.bias *= s;
    }
    return *this;
  }

  friend ModelParams operator*(Scalar s, ModelParams p) { return p *= s; }

  bool operator==(const ModelParams& o) const { return arch_ == o.arch_ && layers_ == o.layers_; }

  void require_same_shape(const ModelParams& o) const {
    if (!same_shape(o)) throw ConfigError("model: shape mismatch");
  }

 private:
  ArchSpec arch_;
  std::vector<DenseParams<Scalar>> layers_;
};

/// Same shape as the model the gradient was taken of.
template <typename Scalar>
using Gradients = ModelParams<Scalar>;

using Model = ModelParams<double>;

template <typename Scalar>
struct Batch {
  Matrix<Scalar> inputs;    // batch_size x in_dim
  std::vector<int> labels;  // batch_size
};

template <typename Scalar>
struct ForwardResult {
  Matrix<Scalar> logits;
  Scalar loss{};
};

namespace detail {

template <typename Scalar>
void check_batch(const ModelParams<Scalar>& model, const Batch<Scalar>& batch) {
  if (batch.inputs.rows() == 0) throw ConfigError("batch: empty");
  if (static_cast<std::size_t>(batch.inputs.rows()) != batch.labels.size())
    throw ConfigError("batch: input rows and label count differ");
  if (static_cast<std::size_t>(batch.inputs.cols()) != model.arch().input_dim())
    throw ConfigError("batch: input dim does not match architecture");
  const auto classes = static_cast<int>(model.arch().output_dim());
  for (int y : batch.labels)
    if (y < 0 || y >= classes) throw ConfigError("batch: label out of range");
}

// Pre-activations of every dense layer, kept for the backward pass.
template <typename Scalar>
struct Tape {
  std::vector<Matrix<Scalar>> inputs;  // input to each dense layer
  Matrix<Scalar> logits;
};

template <typename Scalar>
Tape<Scalar> run_forward(const ModelParams<Scalar>& model, const Matrix<Scalar>& x) {
  Tape<Scalar> tape;
  Matrix<Scalar> a = x;
  for (std::size_t m = 0; m < model.layer_count(); ++m) {
    const auto& layer = model.layer(m);
    tape.inputs.push_back(a);
    Matrix<Scalar> z = a * layer.weight.transpose();
    z.rowwise() += layer.bias.transpose();
    if (m + 1 < model.layer_count())
      a = z.cwiseMax(Scalar(0));
    else
      tape.logits = std::move(z);
  }
  return tape;
}

// Row-wise softmax probabilities and mean cross-entropy.
template <typename Scalar>
std::pair<Matrix<Scalar>, Scalar> softmax_xent(const Matrix<Scalar>& logits, const std::vector<int>& labels) {
  Matrix<Scalar> probs(logits.rows(), logits.cols());
  Scalar loss(0);
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    const Scalar top = logits.row(i).maxCoeff();
    const auto shifted = (logits.row(i).array() - top).eval();
    const Scalar lse = std::log(shifted.exp().sum());
    probs.row(i) = (shifted - lse).exp().matrix();
    loss -= shifted(labels[static_cast<std::size_t>(i)]) - lse;
  }
  return {probs, loss / static_cast<Scalar>(logits.rows())};
}

}  // namespace detail

/// Logits and mean softmax cross-entropy.
template <typename Scalar>
ForwardResult<Scalar> forward(const ModelParams<Scalar>& model, const Batch<Scalar>& batch) {
  detail::check_batch(model, batch);
  auto tape = detail::run_forward(model, batch.inputs);
  auto [probs, loss] = detail::softmax_xent(tape.logits, batch.labels);
  return {std::move(tape.logits), loss};
}

/// Exact gradient of the forward loss.
template <typename Scalar>
Gradients<Scalar> backward(const ModelParams<Scalar>& model, const Batch<Scalar>& batch) {
  detail::check_batch(model, batch);
  auto tape = detail::run_forward(model, batch.inputs);
  auto [probs, loss] = detail::softmax_xent(tape.logits, batch.labels);
  const auto n = static_cast<Scalar>(batch.inputs.rows());

  Matrix<Scalar> dz = probs;
  for (Eigen::Index i = 0; i < dz.rows(); ++i) dz(i, batch.labels[static_cast<std::size_t>(i)]) -= Scalar(1);
  dz /= n;

  Gradients<Scalar> grads(model.arch());
  for (std::size_t m = model.layer_count(); m-- > 0;) {
    const auto& a = tape.inputs[m];
    grads.layer(m).weight.noalias() = dz.transpose() * a;
    grads.layer(m).bias = dz.colwise().sum().transpose();
    if (m == 0) break;
    Matrix<Scalar> da = dz * model.layer(m).weight;
    // a is the ReLU output of the previous layer; a > 0 exactly where the pre-activation was.
    dz = (a.array() > Scalar(0)).select(da, Scalar(0));
  }
  return grads;
}

/// Model with every pruned group's weight row and bias zeroed.
template <typename Scalar>
ModelParams<Scalar> apply_mask(ModelParams<Scalar> model, const PruneMask& mask) {
  if (mask.layer_count() != model.layer_count()) throw ConfigError("mask: layout does not match model");
  for (std::size_t m = 0; m < model.layer_count(); ++m) {
    auto& layer = model.layer(m);
    const auto& bits = mask.layer(m);
    if (bits.size() != layer.weight.rows()) throw ConfigError("mask: layout does not match model");
    for (Eigen::Index l = 0; l < bits.size(); ++l)
      if (!bits(l)) {
        layer.weight.row(l).setZero();
        layer.bias(l) = Scalar(0);
      }
  }
  return model;
}

/// Loss of the model restricted to the kept groups.
template <typename Scalar>
Scalar masked_loss(const ModelParams<Scalar>& model, const PruneMask& mask, const Batch<Scalar>& batch) {
  return forward(apply_mask(model, mask), batch).loss;
}

/// Gradient of masked_loss with respect to the unmasked weights.
template <typename Scalar>
Gradients<Scalar> masked_backward(const ModelParams<Scalar>& model, const PruneMask& mask, const Batch<Scalar>& batch) {
  return apply_mask(backward(apply_mask(model, mask), batch), mask);
}

/// w' = (w - lr * g) masked; pruned groups are exactly zero afterwards.
template <typename Scalar>
ModelParams<Scalar> sgd_step(ModelParams<Scalar> model, const Gradients<Scalar>& grads, Scalar lr,
                             const PruneMask& mask) {
  if (!(lr >= Scalar(0)) || !std::isfinite(static_cast<double>(lr))) throw ConfigError("sgd: lr must be finite and >= 0");
  model.require_same_shape(grads);
  for (std::size_t m = 0; m < model.layer_count(); ++m) {
    model.layer(m).weight -= lr * grads.layer(m).weight;
    model.layer(m).bias -= lr * grads.layer(m).bias;
  }
  return apply_mask(std::move(model), mask);
}

template <typename Scalar>
std::vector<int> predict(const ModelParams<Scalar>& model, const Matrix<Scalar>& inputs) {
  const auto tape = detail::run_forward(model, inputs);
  std::vector<int> out(static_cast<std::size_t>(inputs.rows()));
  for (Eigen::Index i = 0; i < inputs.rows(); ++i) {
    Eigen::Index arg;
    tape.logits.row(i).maxCoeff(&arg);
    out[static_cast<std::size_t>(i)] = static_cast<int>(arg);
  }
  return out;
}

template <typename Scalar>
double accuracy(const ModelParams<Scalar>& model, const Matrix<Scalar>& inputs, std::span<const int> labels) {
  if (inputs.rows() == 0) return 0.0;
  const auto pred = predict(model, inputs);
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == labels[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

struct TrainOptions {
  double lr = 0.05;
  int epochs = 1;
  std::size_t batch_size = 32;
};

struct TrainReport {
  double last_loss = 0.0;
  bool diverged = false;
};

/// Masked minibatch SGD over (inputs, labels) for `epochs` passes.
/// The sample order is reshuffled every epoch from `rng`.
template <typename Scalar>
TrainReport train_masked(ModelParams<Scalar>& model, const PruneMask& mask, const Matrix<Scalar>& inputs,
                         std::span<const int> labels, const TrainOptions& opt, Rng& rng) {
  TrainReport report;
  model = apply_mask(std::move(model), mask);
  const auto n = static_cast<std::size_t>(inputs.rows());
  if (n == 0) return report;
  const std::size_t bs = std::max<std::size_t>(1, std::min(opt.batch_size, n));
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Batch<Scalar> batch;
  for (int e = 0; e < opt.epochs; ++e) {
    rng.shuffle(std::span(order));
    for (std::size_t start = 0; start < n; start += bs) {
      const std::size_t len = std::min(bs, n - start);
      batch.inputs.resize(static_cast<Eigen::Index>(len), inputs.cols());
      batch.labels.resize(len);
      for (std::size_t i = 0; i < len; ++i) {
        batch.inputs.row(static_cast<Eigen::Index>(i)) = inputs.row(order[start + i]);
        batch.labels[i] = labels[static_cast<std::size_t>(order[start + i])];
      }
      const auto grads = backward(model, batch);
      model = sgd_step(std::move(model), grads, static_cast<Scalar>(opt.lr), mask);
    }
  }
  Batch<Scalar> all{inputs, std::vector<int>(labels.begin(), labels.end())};
  report.last_loss = static_cast<double>(forward(model, all).loss);
  report.diverged = !std::isfinite(report.last_loss) || !model.all_finite();
  return report;
}

}  // namespace mpfl
