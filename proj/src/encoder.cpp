#include "vidq/encoder.hpp"

#include <cmath>
#include <string>

#include "vidq/error.hpp"

namespace vidq {

MlpEncoder MlpEncoder::random(std::span<const std::size_t> dims, Rng& rng) {
  if (dims.size() < 2) throw InvalidArgument("encoder: need at least input and output dims");
  MlpEncoder enc;
  for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
    if (dims[l] == 0 || dims[l + 1] == 0) throw InvalidArgument("encoder: zero layer width");
    DenseLayer layer{Matrix(dims[l + 1], dims[l]), Vector(dims[l + 1], 0.0)};
    const double stddev = 1.0 / std::sqrt(static_cast<double>(dims[l]));
    for (double& w : layer.weights.values()) w = rng.normal(0.0, stddev);
    enc.layers.push_back(std::move(layer));
  }
  return enc;
}

MlpEncoder MlpEncoder::identity(std::size_t dim) {
  MlpEncoder enc;
  DenseLayer layer{Matrix(dim, dim), Vector(dim, 0.0)};
  for (std::size_t i = 0; i < dim; ++i) layer.weights(i, i) = 1.0;
  enc.layers.push_back(std::move(layer));
  return enc;
}

std::size_t MlpEncoder::input_dim() const {
  return layers.empty() ? 0 : layers.front().weights.cols();
}

std::size_t MlpEncoder::output_dim() const {
  return layers.empty() ? 0 : layers.back().weights.rows();
}

std::vector<std::size_t> MlpEncoder::dims() const {
  std::vector<std::size_t> out;
  if (layers.empty()) return out;
  out.push_back(input_dim());
  for (const auto& l : layers) out.push_back(l.weights.rows());
  return out;
}

MlpEncoder MlpEncoder::zeros_like() const {
  MlpEncoder out;
  out.activation = activation;
  for (const auto& l : layers) {
    out.layers.push_back({Matrix(l.weights.rows(), l.weights.cols()), Vector(l.bias.size(), 0.0)});
  }
  return out;
}

void MlpEncoder::validate() const {
  if (layers.empty()) throw InvalidArgument("encoder: no layers");
  for (std::size_t l = 0; l < layers.size(); ++l) {
    if (layers[l].bias.size() != layers[l].weights.rows()) {
      throw InvalidArgument("encoder: layer " + std::to_string(l) + " bias size mismatch");
    }
    if (l > 0 && layers[l].weights.cols() != layers[l - 1].weights.rows()) {
      throw InvalidArgument("encoder: layer " + std::to_string(l) + " input dim " +
                            std::to_string(layers[l].weights.cols()) + " does not chain with " +
                            std::to_string(layers[l - 1].weights.rows()));
    }
  }
}

namespace {

void check_input(const MlpEncoder& params, std::span<const double> raw) {
  if (params.layers.empty()) throw InvalidArgument("encoder: no layers");
  if (raw.size() != params.input_dim()) {
    throw InvalidArgument("encoder: input dim " + std::to_string(raw.size()) + ", expected " +
                          std::to_string(params.input_dim()));
  }
}

// Pre-activation output of each layer.
std::vector<Vector> forward_trace(const MlpEncoder& params, std::span<const double> raw) {
  std::vector<Vector> pre;
  pre.reserve(params.layers.size());
  Vector h(raw.begin(), raw.end());
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    Vector z = matvec(layer.weights, h);
    axpy(1.0, layer.bias, z);
    pre.push_back(z);
    if (l + 1 < params.layers.size()) {
      for (double& v : z) v = v > 0.0 ? v : 0.0;
    }
    h = std::move(z);
  }
  return pre;
}

}  // namespace

Vector encode(const MlpEncoder& params, std::span<const double> raw) {
  check_input(params, raw);
  return forward_trace(params, raw).back();
}

Vector encode_backward_accumulate(const MlpEncoder& params, std::span<const double> raw,
                                  std::span<const double> upstream, MlpEncoder& grads) {
  check_input(params, raw);
  if (upstream.size() != params.output_dim()) {
    throw InvalidArgument("encoder: upstream dim mismatch");
  }
  const std::vector<Vector> pre = forward_trace(params, raw);

  Vector delta(upstream.begin(), upstream.end());
  for (std::size_t l = params.layers.size(); l-- > 0;) {
    // Input to layer l: raw for the first layer, relu(pre[l-1]) otherwise.
    Vector input;
    if (l == 0) {
      input.assign(raw.begin(), raw.end());
    } else {
      input = pre[l - 1];
      for (double& v : input) v = v > 0.0 ? v : 0.0;
    }
    auto& g = grads.layers[l];
    for (std::size_t r = 0; r < g.weights.rows(); ++r) {
      if (delta[r] == 0.0) continue;
      axpy(delta[r], input, g.weights.row(r));
      g.bias[r] += delta[r];
    }
    Vector back = matvec_transposed(params.layers[l].weights, delta);
    if (l > 0) {
      const Vector& z = pre[l - 1];
      for (std::size_t j = 0; j < back.size(); ++j) {
        if (!(z[j] > 0.0)) back[j] = 0.0;
      }
    }
    delta = std::move(back);
  }
  return delta;
}

EncoderGrad encode_backward(const MlpEncoder& params, std::span<const double> raw,
                            std::span<const double> upstream) {
  EncoderGrad out{params.zeros_like(), {}};
  out.grad_raw = encode_backward_accumulate(params, raw, upstream, out.grad_params);
  return out;
}

}  // namespace vidq
