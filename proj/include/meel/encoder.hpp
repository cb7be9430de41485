#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "meel/numerics.hpp"
#include "meel/prng.hpp"

namespace meel {

enum class Activation : std::uint32_t { kTanh = 0 };

struct DenseLayer {
  Matrix weight;  // out x in
  Vector bias;    // out

  bool operator==(const DenseLayer&) const = default;
};

// Fully connected stack: hidden layers apply the activation, the last layer is
// linear and its output is L2-normalized into the joint embedding space.
struct MlpParams {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::kTanh;

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::size_t parameter_count() const;

  // Same shapes, all values zero.
  MlpParams zeros_like() const;
  bool same_shape(const MlpParams& other) const;

  // Flat views over every weight and bias, in a fixed order shared by all
  // params of the same shape.
  std::vector<std::span<double>> tensors();
  std::vector<std::span<const double>> tensors() const;

  bool operator==(const MlpParams&) const = default;
};

MlpParams init_params(std::size_t input_dim, std::span<const std::size_t> hidden_dims,
                      std::size_t output_dim, Prng& prng);

struct ForwardCache {
  std::vector<Vector> layer_inputs;    // input fed to each layer
  std::vector<Vector> pre_activations; // W h + b of each layer
  Normalized output;
};

struct Encoded {
  Vector embedding;
  ForwardCache cache;
};

Encoded forward(const MlpParams& params, std::span<const double> x);

// Forward pass without keeping a cache (momentum encoders, evaluation).
Vector encode(const MlpParams& params, std::span<const double> x);

// Encodes every row of `features`.
Matrix encode_rows(const MlpParams& params, const Matrix& features);

// Adds d(embedding . grad_embedding)/d(params) into `param_grads` and
// returns the gradient with respect to the input.
Vector backward_accumulate(const MlpParams& params, const ForwardCache& cache,
                           std::span<const double> grad_embedding, MlpParams& param_grads);

struct Gradients {
  MlpParams params;
  Vector input;
};

Gradients backward(const MlpParams& params, const ForwardCache& cache,
                   std::span<const double> grad_embedding);

// Gradient-trained query encoder and its momentum (EMA) shadow.
struct EncoderPair {
  MlpParams query;
  MlpParams key;

  static EncoderPair from_query(MlpParams query);

  bool operator==(const EncoderPair&) const = default;
};

// key <- m * key + (1 - m) * query, elementwise over every parameter.
void momentum_update(EncoderPair& pair, double momentum);

void sync_key_from_query(EncoderPair& pair);

// Order-sensitive hash of the raw parameter bits.
std::uint64_t fingerprint(const MlpParams& params);

}  // namespace meel
