#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "psd/raster.hpp"
#include "psd/tensor.hpp"

namespace psd {

// 3x3 convolution, stride 1, padding 1 (spatial size preserved). Kernel
// geometry is fixed; only the filter count and input channels vary.
struct ConvLayer {
  int in_channels = 1;
  int filters = 1;
  Tensor weights;  // [filters, in_channels, 3, 3]
  Tensor bias;     // [filters]
};

struct DenseLayer {
  int in_features = 1;
  int out_features = 1;
  Tensor weights;  // [out_features, in_features]
  Tensor bias;     // [out_features]
};

// Classifier architecture: input_side^2 grayscale image -> conv_layers x
// (conv 3x3 s1 p1 + ReLU) -> max-pool 3x3 s1 -> FC fc_hidden + ReLU ->
// FC num_classes + softmax.
struct ModelConfig {
  int conv_layers = 1;
  int filters = 15;  // per layer; 25 is the conventional ceiling
  int fc_hidden = 64;
  int num_classes = 2;
  int input_side = 32;
};

struct Model {
  ModelConfig config;
  std::vector<ConvLayer> convs;
  DenseLayer fc1;
  DenseLayer fc2;
};

struct ConvGrads {
  Tensor weights;
  Tensor bias;
};

struct DenseGrads {
  Tensor weights;
  Tensor bias;
};

struct ModelGrads {
  std::vector<ConvGrads> convs;
  DenseGrads fc1;
  DenseGrads fc2;

  static ModelGrads zeros(const Model& model);
  void add(const ModelGrads& other);
  void scale(double factor);
};

// ---- Layer primitives (shared by the classifier and the proposal network) --

// x: [C, H, W] -> [filters, H, W]; cross-correlation plus bias.
Tensor conv_forward(const Tensor& x, const ConvLayer& layer);

// Accumulates dW/db into grads (which must be zero-initialized or carry a
// running sum) and returns dL/dx.
Tensor conv_backward(const Tensor& x, const ConvLayer& layer, const Tensor& dout,
                     ConvGrads& grads);

Tensor relu(const Tensor& x);
// pre is the layer input (pre-activation); gradient is zero where pre <= 0.
Tensor relu_backward(const Tensor& pre, const Tensor& dout);

// 3x3 window max, stride 1: [C, H, W] -> [C, H-2, W-2]. Ties resolve to the
// first element in row-major scan order. Requires H, W >= 3.
struct MaxPoolResult {
  Tensor out;
  std::vector<std::int32_t> argmax;  // flat index into the input, per output cell
};
MaxPoolResult maxpool_forward(const Tensor& x);
Tensor maxpool_backward(const MaxPoolResult& pooled, const Tensor& dout,
                        const std::vector<int>& input_shape);

// x: [in] -> [out]; W x + b.
Tensor dense_forward(const Tensor& x, const DenseLayer& layer);
Tensor dense_backward(const Tensor& x, const DenseLayer& layer, const Tensor& dout,
                      DenseGrads& grads);

// Numerically stable (max-subtracted); outputs positive, sum 1.
Tensor softmax(const Tensor& logits);

// -log(probs[label]) with a 1e-12 probability floor.
double cross_entropy(const Tensor& probs, int label);

// d(loss)/d(logits) for softmax + cross-entropy: probs - one_hot(label).
Tensor softmax_cross_entropy_grad(const Tensor& probs, int label);

// w <- w - lr * g, elementwise; shapes must match.
void sgd_step(Tensor& param, const Tensor& grad, double learning_rate);
void sgd_step(Model& model, const ModelGrads& grads, double learning_rate);

// Fan-in-scaled uniform init, |w| <= sqrt(6 / fan_in), zero biases;
// bitwise-deterministic per seed.
Model init_model(const ModelConfig& config, std::uint64_t seed);

// ---- Whole-model operations ----

// Returns class probabilities [num_classes].
Tensor model_forward(const Model& model, const Tensor& image);

// Forward + manual backprop for one example; accumulates parameter gradients
// into grads and returns the loss. Throws NumericError on a non-finite loss.
double backward(const Model& model, const Tensor& image, int label, ModelGrads& grads);

int predict(const Model& model, const Tensor& image);
double predict_positive_prob(const Model& model, const Tensor& image);

// [1, side, side] tensor from a raster image.
Tensor image_tensor(const RasterImage& img);

// Versioned binary weight file: magic "PSDW1", five little-endian int32
// config fields (conv_layers, filters, fc_hidden, num_classes, input_side),
// then little-endian float64 tensor data in declaration order.
void save_model(const Model& model, const std::filesystem::path& path);
Model load_model(const std::filesystem::path& path);

}  // namespace psd
