#pragma once

// Dense multilayer perceptrons with exact reverse-mode gradients and an
// AdamW optimizer. Everything is templated on the scalar type; the rest of the
// project instantiates it with double.
//
// Inputs are column-major batches: an (input_dim x N) matrix holds N samples,
// one per column. A single sample is just an N = 1 batch.

#include <cmath>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <type_traits>
#include <vector>

#include <Eigen/Dense>

#include "gman/errors.hpp"
#include "gman/random.hpp"

namespace gman {

enum class Activation { relu, tanh, identity };

inline const char* to_string(Activation a) {
  switch (a) {
    case Activation::relu: return "relu";
    case Activation::tanh: return "tanh";
    case Activation::identity: return "identity";
  }
  return "?";
}

inline Activation activation_from_string(const std::string& s) {
  if (s == "relu") return Activation::relu;
  if (s == "tanh") return Activation::tanh;
  if (s == "identity") return Activation::identity;
  throw ValidationError("unknown activation '" + s + "'");
}

/// Architecture and seed of one network. `activation` is applied after every
/// hidden layer, `output_activation` after the last one.
struct MlpSpec {
  Eigen::Index input_dim = 1;
  std::vector<Eigen::Index> layer_widths;
  Activation activation = Activation::relu;
  Activation output_activation = Activation::identity;
  std::uint64_t seed = 0;

  Eigen::Index output_dim() const { return layer_widths.empty() ? 0 : layer_widths.back(); }
};

/// Hidden-layer defaults used for every learned network unless configured.
inline constexpr int kDefaultHiddenLayers = 3;
inline constexpr int kDefaultHiddenWidth = 32;

/// `hidden_layers` layers of `width` units followed by an `out`-wide output.
inline MlpSpec default_mlp_spec(Eigen::Index in, Eigen::Index out, std::uint64_t seed,
                                int hidden_layers = kDefaultHiddenLayers,
                                int width = kDefaultHiddenWidth) {
  MlpSpec spec;
  spec.input_dim = in;
  spec.layer_widths.assign(static_cast<std::size_t>(hidden_layers), width);
  spec.layer_widths.push_back(out);
  spec.seed = seed;
  return spec;
}

template <typename Scalar>
using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar>
using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;

template <typename Scalar>
struct MlpParams {
  using Matrix = MatrixX<Scalar>;
  using Vector = VectorX<Scalar>;

  std::vector<Matrix> weights;  // weights[k]: (width_k x width_{k-1})
  std::vector<Vector> biases;
  Activation activation = Activation::relu;
  Activation output_activation = Activation::identity;

  std::size_t num_layers() const { return weights.size(); }
  Eigen::Index input_dim() const { return weights.empty() ? 0 : weights.front().cols(); }
  Eigen::Index output_dim() const { return weights.empty() ? 0 : weights.back().rows(); }

  Activation activation_at(std::size_t layer) const {
    return layer + 1 == weights.size() ? output_activation : activation;
  }

  MlpSpec spec() const {
    MlpSpec s;
    s.input_dim = input_dim();
    for (const auto& w : weights) s.layer_widths.push_back(w.rows());
    s.activation = activation;
    s.output_activation = output_activation;
    return s;
  }

  /// Same shapes and activations, every entry zero.
  MlpParams zeros_like() const {
    MlpParams z;
    z.activation = activation;
    z.output_activation = output_activation;
    for (const auto& w : weights) z.weights.push_back(Matrix::Zero(w.rows(), w.cols()));
    for (const auto& b : biases) z.biases.push_back(Vector::Zero(b.size()));
    return z;
  }

  bool same_shape(const MlpParams& other) const {
    if (weights.size() != other.weights.size() || biases.size() != other.biases.size()) return false;
    for (std::size_t k = 0; k < weights.size(); ++k) {
      if (weights[k].rows() != other.weights[k].rows() || weights[k].cols() != other.weights[k].cols() ||
          biases[k].size() != other.biases[k].size())
        return false;
    }
    return true;
  }

  bool all_finite() const {
    for (const auto& w : weights)
      if (!w.allFinite()) return false;
    for (const auto& b : biases)
      if (!b.allFinite()) return false;
    return true;
  }

  MlpParams& operator+=(const MlpParams& other) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      weights[k] += other.weights[k];
      biases[k] += other.biases[k];
    }
    return *this;
  }

  MlpParams& operator*=(Scalar s) {
    for (std::size_t k = 0; k < weights.size(); ++k) {
      weights[k] *= s;
      biases[k] *= s;
    }
    return *this;
  }

  friend bool operator==(const MlpParams& a, const MlpParams& b) {
    if (a.activation != b.activation || a.output_activation != b.output_activation || !a.same_shape(b))
      return false;
    for (std::size_t k = 0; k < a.weights.size(); ++k)
      if (a.weights[k] != b.weights[k] || a.biases[k] != b.biases[k]) return false;
    return true;
  }
};

inline void validate(const MlpSpec& spec) {
  if (spec.input_dim <= 0) throw ValidationError("mlp input_dim must be positive");
  if (spec.layer_widths.empty()) throw ValidationError("mlp layer_widths must be non-empty");
  for (auto w : spec.layer_widths)
    if (w <= 0) throw ValidationError("mlp layer widths must be positive");
}

/// Fan-in scaled uniform init, U(-b, b) with b = sqrt(6 / fan_in) for layers
/// followed by relu and sqrt(3 / fan_in) otherwise, so activations keep their
/// scale through depth. Drawn row-major per layer from Rng(spec.seed).
/// Biases start at zero.
template <typename Scalar = double>
MlpParams<Scalar> mlp_init(const MlpSpec& spec) {
  validate(spec);
  MlpParams<Scalar> p;
  p.activation = spec.activation;
  p.output_activation = spec.output_activation;
  Rng rng(spec.seed);
  Eigen::Index fan_in = spec.input_dim;
  for (std::size_t k = 0; k < spec.layer_widths.size(); ++k) {
    const auto width = spec.layer_widths[k];
    const bool last = k + 1 == spec.layer_widths.size();
    const Activation act = last ? spec.output_activation : spec.activation;
    const double bound = std::sqrt((act == Activation::relu ? 6.0 : 3.0) / static_cast<double>(fan_in));
    MatrixX<Scalar> w(width, fan_in);
    for (Eigen::Index r = 0; r < width; ++r)
      for (Eigen::Index c = 0; c < fan_in; ++c) w(r, c) = static_cast<Scalar>(rng.uniform(-bound, bound));
    p.weights.push_back(std::move(w));
    p.biases.push_back(VectorX<Scalar>::Zero(width));
    fan_in = width;
  }
  return p;
}

namespace detail {

template <typename Derived>
auto activate(const Eigen::MatrixBase<Derived>& z, Activation a) {
  using Scalar = typename Derived::Scalar;
  switch (a) {
    case Activation::relu: return MatrixX<Scalar>(z.cwiseMax(Scalar(0)));
    case Activation::tanh: return MatrixX<Scalar>(z.array().tanh().matrix());
    case Activation::identity: break;
  }
  return MatrixX<Scalar>(z);
}

// Derivative of the activation in terms of the pre-activation z and the
// post-activation a. relu'(0) is taken to be 0.
template <typename Scalar>
MatrixX<Scalar> activation_derivative(const MatrixX<Scalar>& z, const MatrixX<Scalar>& a, Activation act) {
  switch (act) {
    case Activation::relu:
      return (z.array() > Scalar(0)).template cast<Scalar>().matrix();
    case Activation::tanh:
      return (Scalar(1) - a.array().square()).matrix();
    case Activation::identity: break;
  }
  return MatrixX<Scalar>::Ones(z.rows(), z.cols());
}

}  // namespace detail

/// Forward record: the input to every layer and every pre-activation.
template <typename Scalar>
struct MlpTape {
  std::vector<MatrixX<Scalar>> layer_inputs;  // layer_inputs[0] is the batch input
  std::vector<MatrixX<Scalar>> pre_activations;
  std::vector<MatrixX<Scalar>> post_activations;
};

template <typename Scalar>
struct MlpForward {
  MatrixX<Scalar> output;
  MlpTape<Scalar> tape;
};

template <typename Scalar>
void check_input(const MlpParams<Scalar>& params, const std::type_identity_t<MatrixX<Scalar>>& input) {
  if (params.num_layers() == 0) throw ValidationError("mlp has no layers");
  if (input.rows() != params.input_dim())
    throw ValidationError("mlp input has " + std::to_string(input.rows()) + " rows, expected " +
                          std::to_string(params.input_dim()));
  if (!input.allFinite()) throw NumericError("mlp input contains non-finite values");
}

/// Output only, no tape.
template <typename Scalar>
MatrixX<Scalar> mlp_eval(const MlpParams<Scalar>& params, const std::type_identity_t<MatrixX<Scalar>>& input) {
  check_input(params, input);
  MatrixX<Scalar> x = input;
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    MatrixX<Scalar> z = params.weights[k] * x;
    z.colwise() += params.biases[k];
    x = detail::activate(z, params.activation_at(k));
  }
  return x;
}

template <typename Scalar>
MlpForward<Scalar> mlp_forward(const MlpParams<Scalar>& params, const std::type_identity_t<MatrixX<Scalar>>& input) {
  check_input(params, input);
  MlpForward<Scalar> out;
  auto& tape = out.tape;
  tape.layer_inputs.reserve(params.num_layers());
  MatrixX<Scalar> x = input;
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    MatrixX<Scalar> z = params.weights[k] * x;
    z.colwise() += params.biases[k];
    MatrixX<Scalar> a = detail::activate(z, params.activation_at(k));
    tape.layer_inputs.push_back(std::move(x));
    tape.pre_activations.push_back(std::move(z));
    tape.post_activations.push_back(a);
    x = std::move(a);
  }
  out.output = std::move(x);
  return out;
}

/// Parameter gradients (same layout as MlpParams) plus the gradient with
/// respect to the batch input.
template <typename Scalar>
struct GradBundle {
  MlpParams<Scalar> params;
  MatrixX<Scalar> input_gradient;
};

/// Reverse pass for sum over the batch of <output, upstream>. Parameter
/// gradients are summed over columns.
template <typename Scalar>
GradBundle<Scalar> mlp_backward(const MlpParams<Scalar>& params, const MlpTape<Scalar>& tape,
                                const std::type_identity_t<MatrixX<Scalar>>& upstream) {
  const std::size_t layers = params.num_layers();
  if (tape.pre_activations.size() != layers || tape.layer_inputs.size() != layers)
    throw ValidationError("mlp tape does not match parameters (layer count)");
  for (std::size_t k = 0; k < layers; ++k) {
    if (tape.pre_activations[k].rows() != params.weights[k].rows() ||
        tape.layer_inputs[k].rows() != params.weights[k].cols())
      throw ValidationError("mlp tape does not match parameters at layer " + std::to_string(k));
  }
  const auto& last = tape.pre_activations.back();
  if (upstream.rows() != last.rows() || upstream.cols() != last.cols())
    throw ValidationError("upstream gradient shape does not match mlp output");

  GradBundle<Scalar> g{params.zeros_like(), {}};
  MatrixX<Scalar> delta = upstream;
  for (std::size_t k = layers; k-- > 0;) {
    delta.array() *= detail::activation_derivative(tape.pre_activations[k], tape.post_activations[k],
                                                   params.activation_at(k))
                         .array();
    g.params.weights[k].noalias() = delta * tape.layer_inputs[k].transpose();
    g.params.biases[k] = delta.rowwise().sum();
    delta = params.weights[k].transpose() * delta;
  }
  g.input_gradient = std::move(delta);
  return g;
}

/// Central-difference gradient of head(mlp_eval(params, input)) with respect
/// to every parameter and every input entry. Test oracle; O(#params) forwards.
template <typename Scalar>
GradBundle<Scalar> finite_diff_grad(const MlpParams<Scalar>& params, const std::type_identity_t<MatrixX<Scalar>>& input,
                                    const std::type_identity_t<std::function<Scalar(const MatrixX<Scalar>&)>>& head,
                                    Scalar step = Scalar(1e-5)) {
  check_input(params, input);
  GradBundle<Scalar> g{params.zeros_like(), MatrixX<Scalar>::Zero(input.rows(), input.cols())};
  MlpParams<Scalar> probe = params;
  auto central = [&](Scalar& slot, const MatrixX<Scalar>& x) {
    const Scalar saved = slot;
    slot = saved + step;
    const Scalar up = head(mlp_eval(probe, x));
    slot = saved - step;
    const Scalar down = head(mlp_eval(probe, x));
    slot = saved;
    return (up - down) / (Scalar(2) * step);
  };
  for (std::size_t k = 0; k < params.num_layers(); ++k) {
    for (Eigen::Index i = 0; i < params.weights[k].size(); ++i)
      g.params.weights[k].data()[i] = central(probe.weights[k].data()[i], input);
    for (Eigen::Index i = 0; i < params.biases[k].size(); ++i)
      g.params.biases[k].data()[i] = central(probe.biases[k].data()[i], input);
  }
  MatrixX<Scalar> x = input;
  for (Eigen::Index i = 0; i < x.size(); ++i) {
    const Scalar saved = x.data()[i];
    x.data()[i] = saved + step;
    const Scalar up = head(mlp_eval(params, x));
    x.data()[i] = saved - step;
    const Scalar down = head(mlp_eval(params, x));
    x.data()[i] = saved;
    g.input_gradient.data()[i] = (up - down) / (Scalar(2) * step);
  }
  return g;
}

// ---------------------------------------------------------------------------
// Optimizer

/// A named, flat view of one parameter (or gradient) array.
template <typename T>
struct ArrayView {
  std::string name;
  std::span<T> values;
};

template <typename Scalar, typename Visitor>
void for_each_array(MlpParams<Scalar>& p, const std::string& prefix, Visitor&& visit) {
  for (std::size_t k = 0; k < p.num_layers(); ++k) {
    visit(prefix + "weights[" + std::to_string(k) + "]",
          std::span<Scalar>(p.weights[k].data(), static_cast<std::size_t>(p.weights[k].size())));
    visit(prefix + "biases[" + std::to_string(k) + "]",
          std::span<Scalar>(p.biases[k].data(), static_cast<std::size_t>(p.biases[k].size())));
  }
}

template <typename Scalar, typename Visitor>
void for_each_array(const MlpParams<Scalar>& p, const std::string& prefix, Visitor&& visit) {
  for (std::size_t k = 0; k < p.num_layers(); ++k) {
    visit(prefix + "weights[" + std::to_string(k) + "]",
          std::span<const Scalar>(p.weights[k].data(), static_cast<std::size_t>(p.weights[k].size())));
    visit(prefix + "biases[" + std::to_string(k) + "]",
          std::span<const Scalar>(p.biases[k].data(), static_cast<std::size_t>(p.biases[k].size())));
  }
}

/// Scalar type of a parameter container; composite models are double.
template <typename Model>
struct scalar_of {
  using type = double;
};
template <typename Scalar>
struct scalar_of<MlpParams<Scalar>> {
  using type = Scalar;
};

/// Named flat views of every array in `model`, in visiting order. Views are
/// const when `model` is.
template <typename Model>
auto collect_arrays(Model& model, const std::string& prefix = "") {
  using Scalar = typename scalar_of<std::remove_const_t<Model>>::type;
  using Elem = std::conditional_t<std::is_const_v<Model>, const Scalar, Scalar>;
  std::vector<ArrayView<Elem>> out;
  for_each_array(model, prefix, [&](std::string name, std::span<Elem> v) { out.push_back({std::move(name), v}); });
  return out;
}

struct AdamConfig {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.0;
};

template <typename Scalar>
struct OptimState {
  AdamConfig config;
  std::vector<VectorX<Scalar>> first_moment;
  std::vector<VectorX<Scalar>> second_moment;
  std::int64_t step_count = 0;
};

/// One AdamW step over matching lists of parameter and gradient arrays.
///
/// Moments are allocated on the first call. Weight decay is decoupled:
/// theta <- theta - lr * wd * theta, applied before the moment update.
/// All gradients are checked before anything is modified, so a non-finite
/// gradient leaves parameters and state untouched.
template <typename Scalar>
void adam_update(const std::vector<ArrayView<Scalar>>& params,
                 const std::vector<ArrayView<const Scalar>>& grads, OptimState<Scalar>& state) {
  if (params.size() != grads.size()) throw ValidationError("optimizer: parameter/gradient array count mismatch");
  for (std::size_t a = 0; a < params.size(); ++a) {
    if (params[a].values.size() != grads[a].values.size())
      throw ValidationError("optimizer: gradient shape mismatch for " + params[a].name);
    for (Scalar g : grads[a].values)
      if (!std::isfinite(g)) throw NumericError("optimizer: non-finite gradient in " + grads[a].name);
  }
  if (state.first_moment.empty()) {
    for (const auto& p : params) {
      state.first_moment.push_back(VectorX<Scalar>::Zero(static_cast<Eigen::Index>(p.values.size())));
      state.second_moment.push_back(VectorX<Scalar>::Zero(static_cast<Eigen::Index>(p.values.size())));
    }
  }
  if (state.first_moment.size() != params.size())
    throw ValidationError("optimizer state does not match parameter layout");
  for (std::size_t a = 0; a < params.size(); ++a)
    if (static_cast<std::size_t>(state.first_moment[a].size()) != params[a].values.size())
      throw ValidationError("optimizer state does not match parameter layout at " + params[a].name);

  const auto& c = state.config;
  state.step_count += 1;
  const Scalar t = static_cast<Scalar>(state.step_count);
  const Scalar bias1 = Scalar(1) - std::pow(Scalar(c.beta1), t);
  const Scalar bias2 = Scalar(1) - std::pow(Scalar(c.beta2), t);
  const Scalar lr = Scalar(c.learning_rate);
  for (std::size_t a = 0; a < params.size(); ++a) {
    auto theta = Eigen::Map<VectorX<Scalar>>(params[a].values.data(), state.first_moment[a].size());
    auto g = Eigen::Map<const VectorX<Scalar>>(grads[a].values.data(), state.first_moment[a].size());
    auto& m = state.first_moment[a];
    auto& v = state.second_moment[a];
    if (c.weight_decay != 0.0) theta *= Scalar(1) - lr * Scalar(c.weight_decay);
    m = Scalar(c.beta1) * m + Scalar(1 - c.beta1) * g;
    v = Scalar(c.beta2) * v + Scalar(1 - c.beta2) * g.cwiseAbs2();
    theta.array() -= lr * (m.array() / bias1) / ((v.array() / bias2).sqrt() + Scalar(c.epsilon));
  }
}

template <typename Scalar>
void optim_step(MlpParams<Scalar>& params, const MlpParams<Scalar>& grads, OptimState<Scalar>& state) {
  if (!params.same_shape(grads)) throw ValidationError("optimizer: gradient shapes do not match parameters");
  adam_update(collect_arrays(params), collect_arrays(grads), state);
}

template <typename Scalar>
void optim_step(MlpParams<Scalar>& params, const GradBundle<Scalar>& grads, OptimState<Scalar>& state) {
  optim_step(params, grads.params, state);
}

using Mlp = MlpParams<double>;

}  // namespace gman
