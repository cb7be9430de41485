#include "meel/encoder.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <string>
#include <utility>

#include "meel/error.hpp"

namespace meel {

std::size_t MlpParams::input_dim() const { return layers.empty() ? 0 : layers.front().weight.cols(); }

std::size_t MlpParams::output_dim() const { return layers.empty() ? 0 : layers.back().weight.rows(); }

std::size_t MlpParams::parameter_count() const {
  std::size_t n = 0;
  for (const auto& layer : layers) n += layer.weight.size() + layer.bias.size();
  return n;
}

MlpParams MlpParams::zeros_like() const {
  MlpParams out;
  out.activation = activation;
  out.layers.reserve(layers.size());
  for (const auto& layer : layers) {
    out.layers.push_back({Matrix(layer.weight.rows(), layer.weight.cols()),
                          Vector(layer.bias.size(), 0.0)});
  }
  return out;
}

bool MlpParams::same_shape(const MlpParams& other) const {
  if (layers.size() != other.layers.size() || activation != other.activation) return false;
  for (std::size_t l = 0; l < layers.size(); ++l) {
    const auto& a = layers[l];
    const auto& b = other.layers[l];
    if (a.weight.rows() != b.weight.rows() || a.weight.cols() != b.weight.cols() ||
        a.bias.size() != b.bias.size()) {
      return false;
    }
  }
  return true;
}

std::vector<std::span<double>> MlpParams::tensors() {
  std::vector<std::span<double>> out;
  for (auto& layer : layers) {
    out.push_back(layer.weight.values());
    out.push_back(layer.bias);
  }
  return out;
}

std::vector<std::span<const double>> MlpParams::tensors() const {
  std::vector<std::span<const double>> out;
  for (const auto& layer : layers) {
    out.push_back(layer.weight.values());
    out.push_back(layer.bias);
  }
  return out;
}

MlpParams init_params(std::size_t input_dim, std::span<const std::size_t> hidden_dims,
                      std::size_t output_dim, Prng& prng) {
  if (input_dim == 0 || output_dim == 0) {
    throw Error(ErrorCode::kInvalidArgument, "init_params: zero input or output dimension");
  }
  std::vector<std::size_t> dims{input_dim};
  for (std::size_t h : hidden_dims) {
    if (h == 0) throw Error(ErrorCode::kInvalidArgument, "init_params: zero hidden dimension");
    dims.push_back(h);
  }
  dims.push_back(output_dim);

  MlpParams params;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    const std::size_t fan_in = dims[l];
    const std::size_t fan_out = dims[l + 1];
    const double scale = 1.0 / std::sqrt(static_cast<double>(fan_in));
    Matrix w(fan_out, fan_in);
    for (double& v : w.values()) v = scale * prng.gaussian();
    params.layers.push_back({std::move(w), Vector(fan_out, 0.0)});
  }
  return params;
}

namespace {

void check_input(const MlpParams& params, std::span<const double> x) {
  if (params.layers.empty()) throw Error(ErrorCode::kInvalidArgument, "encoder has no layers");
  if (x.size() != params.input_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "encoder input: expected " +
                                                   std::to_string(params.input_dim()) +
                                                   " features, got " + std::to_string(x.size()));
  }
}

Vector affine(const DenseLayer& layer, std::span<const double> h) {
  Vector z(layer.bias);
  for (std::size_t r = 0; r < z.size(); ++r) z[r] += dot(layer.weight.row(r), h);
  return z;
}

}  // namespace

Encoded forward(const MlpParams& params, std::span<const double> x) {
  check_input(params, x);
  Encoded out;
  auto& cache = out.cache;
  Vector h(x.begin(), x.end());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Vector z = affine(params.layers[l], h);
    cache.layer_inputs.push_back(std::move(h));
    if (l + 1 < params.layers.size()) {
      h.resize(z.size());
      for (std::size_t i = 0; i < z.size(); ++i) h[i] = std::tanh(z[i]);
    }
    cache.pre_activations.push_back(std::move(z));
  }
  cache.output = l2_normalize_with_grad(cache.pre_activations.back());
  out.embedding = cache.output.unit;
  return out;
}

Vector encode(const MlpParams& params, std::span<const double> x) {
  check_input(params, x);
  Vector h(x.begin(), x.end());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    Vector z = affine(params.layers[l], h);
    if (l + 1 < params.layers.size()) {
      for (double& v : z) v = std::tanh(v);
    }
    h = std::move(z);
  }
  return l2_normalize(h);
}

Matrix encode_rows(const MlpParams& params, const Matrix& features) {
  Matrix out(features.rows(), params.output_dim());
  for (std::size_t i = 0; i < features.rows(); ++i) {
    const Vector e = encode(params, features.row(i));
    std::copy(e.begin(), e.end(), out.row(i).begin());
  }
  return out;
}

Vector backward_accumulate(const MlpParams& params, const ForwardCache& cache,
                           std::span<const double> grad_embedding, MlpParams& param_grads) {
  const std::size_t depth = params.layers.size();
  if (cache.layer_inputs.size() != depth || cache.pre_activations.size() != depth ||
      !params.same_shape(param_grads) || grad_embedding.size() != params.output_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "encoder backward: cache or gradient shape mismatch");
  }
  Vector grad = cache.output.backward(grad_embedding);
  for (std::size_t l = depth; l-- > 0;) {
    const auto& layer = params.layers[l];
    const auto& input = cache.layer_inputs[l];
    if (l + 1 < depth) {
      // Post-activation of layer l is the input to layer l + 1.
      const auto& act = cache.layer_inputs[l + 1];
      for (std::size_t i = 0; i < grad.size(); ++i) grad[i] *= 1.0 - act[i] * act[i];
    }
    auto& g = param_grads.layers[l];
    for (std::size_t r = 0; r < grad.size(); ++r) {
      g.bias[r] += grad[r];
      axpy(grad[r], input, g.weight.row(r));
    }
    Vector grad_input(layer.weight.cols(), 0.0);
    for (std::size_t r = 0; r < grad.size(); ++r) axpy(grad[r], layer.weight.row(r), grad_input);
    grad = std::move(grad_input);
  }
  return grad;
}

Gradients backward(const MlpParams& params, const ForwardCache& cache,
                   std::span<const double> grad_embedding) {
  Gradients out{params.zeros_like(), {}};
  out.input = backward_accumulate(params, cache, grad_embedding, out.params);
  return out;
}

EncoderPair EncoderPair::from_query(MlpParams query) {
  EncoderPair pair{std::move(query), {}};
  pair.key = pair.query;
  return pair;
}

void momentum_update(EncoderPair& pair, double momentum) {
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw Error(ErrorCode::kInvalidArgument,
                "momentum must lie in [0, 1), got " + std::to_string(momentum));
  }
  if (!pair.query.same_shape(pair.key)) {
    throw Error(ErrorCode::kDimensionMismatch, "momentum_update: query/key shape mismatch");
  }
  if (momentum == 0.0) {
    pair.key = pair.query;
    return;
  }
  // Written as k + (1 - m)(q - k) so that k == q is an exact fixed point.
  auto keys = pair.key.tensors();
  const auto queries = std::as_const(pair.query).tensors();
  const double rate = 1.0 - momentum;
  for (std::size_t t = 0; t < keys.size(); ++t) {
    for (std::size_t i = 0; i < keys[t].size(); ++i) {
      keys[t][i] += rate * (queries[t][i] - keys[t][i]);
    }
  }
}

void sync_key_from_query(EncoderPair& pair) { pair.key = pair.query; }

std::uint64_t fingerprint(const MlpParams& params) {
  std::uint64_t h = 0xCBF29CE484222325ULL;
  for (auto t : params.tensors()) {
    for (double v : t) {
      h ^= std::bit_cast<std::uint64_t>(v);
      h *= 0x100000001B3ULL;
    }
  }
  return h;
}

}  // namespace meel
