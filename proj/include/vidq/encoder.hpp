#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "vidq/numcore.hpp"

namespace vidq {

enum class Activation : std::uint32_t { kRelu = 1 };

struct DenseLayer {
  Matrix weights;  // out x in
  Vector bias;     // out

  friend bool operator==(const DenseLayer&, const DenseLayer&) = default;
};

// Affine layers with a rectifier between consecutive layers and nothing after
// the last one. Used for the image/text encoders and for the CTR towers.
struct MlpEncoder {
  std::vector<DenseLayer> layers;
  Activation activation = Activation::kRelu;

  // dims = {input, hidden..., output}; weights ~ N(0, 1/fan_in), zero biases.
  static MlpEncoder random(std::span<const std::size_t> dims, Rng& rng);
  // Single square layer with identity weights.
  static MlpEncoder identity(std::size_t dim);

  std::size_t input_dim() const;
  std::size_t output_dim() const;
  std::vector<std::size_t> dims() const;
  MlpEncoder zeros_like() const;

  // Checks that consecutive layer shapes chain.
  void validate() const;

  template <typename Fn>
  void for_each_tensor(Fn&& fn) {
    for (auto& l : layers) {
      fn(l.weights.values());
      fn(std::span<double>(l.bias));
    }
  }
  template <typename Fn>
  void for_each_tensor(Fn&& fn) const {
    for (const auto& l : layers) {
      fn(l.weights.values());
      fn(std::span<const double>(l.bias));
    }
  }

  friend bool operator==(const MlpEncoder&, const MlpEncoder&) = default;
};

struct EncoderGrad {
  MlpEncoder grad_params;
  Vector grad_raw;
};

Vector encode(const MlpEncoder& params, std::span<const double> raw);

// Gradient of <upstream, encode(raw)>. The rectifier subgradient at 0 is 0.
EncoderGrad encode_backward(const MlpEncoder& params, std::span<const double> raw,
                            std::span<const double> upstream);

// Same as encode_backward but accumulates parameter gradients into `grads`
// and returns only the input gradient.
Vector encode_backward_accumulate(const MlpEncoder& params, std::span<const double> raw,
                                  std::span<const double> upstream, MlpEncoder& grads);

}  // namespace vidq
