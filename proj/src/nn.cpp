#include "psd/nn.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>

#include "psd/rng.hpp"

namespace psd {
namespace {

void require(bool ok, const char* msg) {
  if (!ok) throw DataError(msg);
}

constexpr int kKernel = 3;
constexpr int kPad = 1;

}  // namespace

ModelGrads ModelGrads::zeros(const Model& model) {
  ModelGrads g;
  g.convs.reserve(model.convs.size());
  for (const ConvLayer& conv : model.convs)
    g.convs.push_back({Tensor::zeros_like(conv.weights), Tensor::zeros_like(conv.bias)});
  g.fc1 = {Tensor::zeros_like(model.fc1.weights), Tensor::zeros_like(model.fc1.bias)};
  g.fc2 = {Tensor::zeros_like(model.fc2.weights), Tensor::zeros_like(model.fc2.bias)};
  return g;
}

void ModelGrads::add(const ModelGrads& other) {
  require(convs.size() == other.convs.size(), "gradient structure mismatch");
  for (std::size_t l = 0; l < convs.size(); ++l) {
    for (std::size_t i = 0; i < convs[l].weights.size(); ++i)
      convs[l].weights[i] += other.convs[l].weights[i];
    for (std::size_t i = 0; i < convs[l].bias.size(); ++i)
      convs[l].bias[i] += other.convs[l].bias[i];
  }
  for (std::size_t i = 0; i < fc1.weights.size(); ++i) fc1.weights[i] += other.fc1.weights[i];
  for (std::size_t i = 0; i < fc1.bias.size(); ++i) fc1.bias[i] += other.fc1.bias[i];
  for (std::size_t i = 0; i < fc2.weights.size(); ++i) fc2.weights[i] += other.fc2.weights[i];
  for (std::size_t i = 0; i < fc2.bias.size(); ++i) fc2.bias[i] += other.fc2.bias[i];
}

void ModelGrads::scale(double factor) {
  for (ConvGrads& g : convs) {
    for (std::size_t i = 0; i < g.weights.size(); ++i) g.weights[i] *= factor;
    for (std::size_t i = 0; i < g.bias.size(); ++i) g.bias[i] *= factor;
  }
  for (std::size_t i = 0; i < fc1.weights.size(); ++i) fc1.weights[i] *= factor;
  for (std::size_t i = 0; i < fc1.bias.size(); ++i) fc1.bias[i] *= factor;
  for (std::size_t i = 0; i < fc2.weights.size(); ++i) fc2.weights[i] *= factor;
  for (std::size_t i = 0; i < fc2.bias.size(); ++i) fc2.bias[i] *= factor;
}

Tensor conv_forward(const Tensor& x, const ConvLayer& layer) {
  require(x.rank() == 3, "conv input must be [C, H, W]");
  require(x.dim(0) == layer.in_channels, "conv input channel mismatch");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int F = layer.filters;

  Tensor y({F, H, W});
  const double* xd = x.data();
  double* yd = y.data();
  const double* wd = layer.weights.data();
  for (int f = 0; f < F; ++f) {
    const double b = layer.bias[static_cast<std::size_t>(f)];
    double* yf = yd + static_cast<std::size_t>(f) * H * W;
    std::fill(yf, yf + static_cast<std::size_t>(H) * W, b);
    for (int c = 0; c < C; ++c) {
      const double* xc = xd + static_cast<std::size_t>(c) * H * W;
      const double* wfc = wd + (static_cast<std::size_t>(f) * C + c) * kKernel * kKernel;
      for (int u = 0; u < kKernel; ++u) {
        const int i0 = std::max(0, kPad - u);
        const int i1 = std::min(H, H + kPad - u);
        for (int v = 0; v < kKernel; ++v) {
          const double wv = wfc[u * kKernel + v];
          if (wv == 0.0) continue;
          const int j0 = std::max(0, kPad - v);
          const int j1 = std::min(W, W + kPad - v);
          for (int i = i0; i < i1; ++i) {
            const double* xrow = xc + static_cast<std::size_t>(i + u - kPad) * W + (v - kPad);
            double* yrow = yf + static_cast<std::size_t>(i) * W;
            for (int j = j0; j < j1; ++j) yrow[j] += wv * xrow[j];
          }
        }
      }
    }
  }
  return y;
}

Tensor conv_backward(const Tensor& x, const ConvLayer& layer, const Tensor& dout,
                     ConvGrads& grads) {
  require(x.rank() == 3 && dout.rank() == 3, "conv backward expects [C, H, W] tensors");
  require(x.dim(0) == layer.in_channels, "conv input channel mismatch");
  require(dout.dim(0) == layer.filters && dout.dim(1) == x.dim(1) && dout.dim(2) == x.dim(2),
          "conv output gradient shape mismatch");
  require(grads.weights.same_shape(layer.weights) && grads.bias.same_shape(layer.bias),
          "conv gradient accumulator shape mismatch");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  const int F = layer.filters;

  Tensor dx({C, H, W});
  const double* xd = x.data();
  const double* dod = dout.data();
  const double* wd = layer.weights.data();
  double* dxd = dx.data();
  double* dwd = grads.weights.data();

  for (int f = 0; f < F; ++f) {
    const double* dof = dod + static_cast<std::size_t>(f) * H * W;
    double acc = 0.0;
    for (std::size_t i = 0; i < static_cast<std::size_t>(H) * W; ++i) acc += dof[i];
    grads.bias[static_cast<std::size_t>(f)] += acc;

    for (int c = 0; c < C; ++c) {
      const double* xc = xd + static_cast<std::size_t>(c) * H * W;
      double* dxc = dxd + static_cast<std::size_t>(c) * H * W;
      const double* wfc = wd + (static_cast<std::size_t>(f) * C + c) * kKernel * kKernel;
      double* dwfc = dwd + (static_cast<std::size_t>(f) * C + c) * kKernel * kKernel;
      for (int u = 0; u < kKernel; ++u) {
        const int i0 = std::max(0, kPad - u);
        const int i1 = std::min(H, H + kPad - u);
        for (int v = 0; v < kKernel; ++v) {
          const int j0 = std::max(0, kPad - v);
          const int j1 = std::min(W, W + kPad - v);
          const double wv = wfc[u * kKernel + v];
          double dw = 0.0;
          for (int i = i0; i < i1; ++i) {
            const double* xrow = xc + static_cast<std::size_t>(i + u - kPad) * W + (v - kPad);
            double* dxrow = dxc + static_cast<std::size_t>(i + u - kPad) * W + (v - kPad);
            const double* dorow = dof + static_cast<std::size_t>(i) * W;
            for (int j = j0; j < j1; ++j) {
              dw += dorow[j] * xrow[j];
              dxrow[j] += wv * dorow[j];
            }
          }
          dwfc[u * kKernel + v] += dw;
        }
      }
    }
  }
  return dx;
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = std::max(0.0, y[i]);
  return y;
}

Tensor relu_backward(const Tensor& pre, const Tensor& dout) {
  require(pre.same_shape(dout), "relu backward shape mismatch");
  Tensor dx = dout;
  for (std::size_t i = 0; i < dx.size(); ++i)
    if (pre[i] <= 0.0) dx[i] = 0.0;
  return dx;
}

MaxPoolResult maxpool_forward(const Tensor& x) {
  require(x.rank() == 3, "maxpool input must be [C, H, W]");
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  require(H >= 3 && W >= 3, "maxpool requires spatial size >= 3");
  const int OH = H - 2, OW = W - 2;

  MaxPoolResult result{Tensor({C, OH, OW}), {}};
  result.argmax.resize(static_cast<std::size_t>(C) * OH * OW);
  const double* xd = x.data();
  double* od = result.out.data();
  std::int32_t* am = result.argmax.data();
  for (int c = 0; c < C; ++c) {
    const double* xc = xd + static_cast<std::size_t>(c) * H * W;
    for (int i = 0; i < OH; ++i)
      for (int j = 0; j < OW; ++j) {
        double best = xc[static_cast<std::size_t>(i) * W + j];
        int best_idx = i * W + j;
        for (int u = 0; u < 3; ++u)
          for (int v = 0; v < 3; ++v) {
            const int idx = (i + u) * W + (j + v);
            if (xc[idx] > best) {
              best = xc[idx];
              best_idx = idx;
            }
          }
        const std::size_t o = (static_cast<std::size_t>(c) * OH + i) * OW + j;
        od[o] = best;
        am[o] = static_cast<std::int32_t>(static_cast<std::size_t>(c) * H * W + best_idx);
      }
  }
  return result;
}

Tensor maxpool_backward(const MaxPoolResult& pooled, const Tensor& dout,
                        const std::vector<int>& input_shape) {
  require(dout.same_shape(pooled.out), "maxpool backward shape mismatch");
  Tensor dx(input_shape);
  for (std::size_t o = 0; o < pooled.argmax.size(); ++o)
    dx[static_cast<std::size_t>(pooled.argmax[o])] += dout[o];
  return dx;
}

Tensor dense_forward(const Tensor& x, const DenseLayer& layer) {
  require(x.size() == static_cast<std::size_t>(layer.in_features), "dense input length mismatch");
  Tensor y({layer.out_features});
  const double* xd = x.data();
  const double* wd = layer.weights.data();
  for (int o = 0; o < layer.out_features; ++o) {
    const double* row = wd + static_cast<std::size_t>(o) * layer.in_features;
    double acc = layer.bias[static_cast<std::size_t>(o)];
    for (int i = 0; i < layer.in_features; ++i) acc += row[i] * xd[i];
    y[static_cast<std::size_t>(o)] = acc;
  }
  return y;
}

Tensor dense_backward(const Tensor& x, const DenseLayer& layer, const Tensor& dout,
                      DenseGrads& grads) {
  require(x.size() == static_cast<std::size_t>(layer.in_features), "dense input length mismatch");
  require(dout.size() == static_cast<std::size_t>(layer.out_features),
          "dense output gradient length mismatch");
  require(grads.weights.same_shape(layer.weights) && grads.bias.same_shape(layer.bias),
          "dense gradient accumulator shape mismatch");

  Tensor dx({layer.in_features});
  const double* xd = x.data();
  const double* wd = layer.weights.data();
  double* dwd = grads.weights.data();
  double* dxd = dx.data();
  for (int o = 0; o < layer.out_features; ++o) {
    const double g = dout[static_cast<std::size_t>(o)];
    grads.bias[static_cast<std::size_t>(o)] += g;
    const double* wrow = wd + static_cast<std::size_t>(o) * layer.in_features;
    double* dwrow = dwd + static_cast<std::size_t>(o) * layer.in_features;
    for (int i = 0; i < layer.in_features; ++i) {
      dwrow[i] += g * xd[i];
      dxd[i] += g * wrow[i];
    }
  }
  return dx;
}

Tensor softmax(const Tensor& logits) {
  require(logits.size() >= 2, "softmax needs at least two logits");
  Tensor probs = logits;
  double max_logit = probs[0];
  for (std::size_t i = 1; i < probs.size(); ++i) max_logit = std::max(max_logit, probs[i]);
  double sum = 0.0;
  for (std::size_t i = 0; i < probs.size(); ++i) {
    probs[i] = std::exp(probs[i] - max_logit);
    sum += probs[i];
  }
  for (std::size_t i = 0; i < probs.size(); ++i) probs[i] /= sum;
  return probs;
}

double cross_entropy(const Tensor& probs, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size())
    throw DataError("cross_entropy label out of range");
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], 1e-12));
}

Tensor softmax_cross_entropy_grad(const Tensor& probs, int label) {
  if (label < 0 || static_cast<std::size_t>(label) >= probs.size())
    throw DataError("cross_entropy label out of range");
  Tensor g = probs;
  g[static_cast<std::size_t>(label)] -= 1.0;
  return g;
}

void sgd_step(Tensor& param, const Tensor& grad, double learning_rate) {
  require(param.same_shape(grad), "sgd_step shape mismatch");
  for (std::size_t i = 0; i < param.size(); ++i) param[i] -= learning_rate * grad[i];
}

void sgd_step(Model& model, const ModelGrads& grads, double learning_rate) {
  require(model.convs.size() == grads.convs.size(), "sgd_step gradient structure mismatch");
  for (std::size_t l = 0; l < model.convs.size(); ++l) {
    sgd_step(model.convs[l].weights, grads.convs[l].weights, learning_rate);
    sgd_step(model.convs[l].bias, grads.convs[l].bias, learning_rate);
  }
  sgd_step(model.fc1.weights, grads.fc1.weights, learning_rate);
  sgd_step(model.fc1.bias, grads.fc1.bias, learning_rate);
  sgd_step(model.fc2.weights, grads.fc2.weights, learning_rate);
  sgd_step(model.fc2.bias, grads.fc2.bias, learning_rate);
}

namespace {

Tensor uniform_init(std::vector<int> shape, int fan_in, Rng& rng) {
  Tensor t(std::move(shape));
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

void validate_config(const ModelConfig& c) {
  require(c.conv_layers >= 1, "config needs at least one conv layer");
  require(c.filters >= 1, "config needs at least one filter");
  require(c.fc_hidden >= 1, "config needs a positive hidden width");
  require(c.num_classes >= 2, "config needs at least two classes");
  require(c.input_side >= 3, "config input side must be >= 3");
}

}  // namespace

Model init_model(const ModelConfig& config, std::uint64_t seed) {
  validate_config(config);
  Model model;
  model.config = config;

  int in_channels = 1;
  for (int l = 0; l < config.conv_layers; ++l) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(l)));
    ConvLayer conv;
    conv.in_channels = in_channels;
    conv.filters = config.filters;
    conv.weights = uniform_init({config.filters, in_channels, kKernel, kKernel},
                                in_channels * kKernel * kKernel, rng);
    conv.bias = Tensor({config.filters});
    model.convs.push_back(std::move(conv));
    in_channels = config.filters;
  }

  const int pooled_side = config.input_side - 2;
  const int flat = config.filters * pooled_side * pooled_side;
  {
    Rng rng(derive_seed(seed, 1000));
    model.fc1 = {flat, config.fc_hidden, uniform_init({config.fc_hidden, flat}, flat, rng),
                 Tensor({config.fc_hidden})};
  }
  {
    Rng rng(derive_seed(seed, 1001));
    model.fc2 = {config.fc_hidden, config.num_classes,
                 uniform_init({config.num_classes, config.fc_hidden}, config.fc_hidden, rng),
                 Tensor({config.num_classes})};
  }
  return model;
}

namespace {

struct ForwardTrace {
  std::vector<Tensor> conv_inputs;   // input to each conv layer
  std::vector<Tensor> conv_outputs;  // pre-activation conv outputs
  Tensor pool_input;                 // post-ReLU activation fed to the pool
  MaxPoolResult pooled;
  Tensor flat;     // flattened pool output
  Tensor fc1_pre;  // pre-activation
  Tensor fc1_out;  // post-ReLU
  Tensor probs;
};

ForwardTrace forward_trace(const Model& model, const Tensor& image) {
  require(image.rank() == 3, "classifier input must be [1, S, S]");
  require(image.dim(0) == 1 && image.dim(1) == model.config.input_side &&
              image.dim(2) == model.config.input_side,
          "classifier input shape mismatch");

  ForwardTrace trace;
  Tensor act = image;
  for (const ConvLayer& conv : model.convs) {
    trace.conv_inputs.push_back(act);
    Tensor pre = conv_forward(act, conv);
    act = relu(pre);
    trace.conv_outputs.push_back(std::move(pre));
  }
  trace.pool_input = std::move(act);
  trace.pooled = maxpool_forward(trace.pool_input);

  Tensor flat({static_cast<int>(trace.pooled.out.size())});
  for (std::size_t i = 0; i < trace.pooled.out.size(); ++i) flat[i] = trace.pooled.out[i];
  trace.flat = std::move(flat);

  trace.fc1_pre = dense_forward(trace.flat, model.fc1);
  trace.fc1_out = relu(trace.fc1_pre);
  trace.probs = softmax(dense_forward(trace.fc1_out, model.fc2));
  return trace;
}

}  // namespace

Tensor model_forward(const Model& model, const Tensor& image) {
  return forward_trace(model, image).probs;
}

double backward(const Model& model, const Tensor& image, int label, ModelGrads& grads) {
  ForwardTrace trace = forward_trace(model, image);
  const double loss = cross_entropy(trace.probs, label);
  if (!std::isfinite(loss)) throw NumericError("non-finite loss in backward pass");

  Tensor dlogits = softmax_cross_entropy_grad(trace.probs, label);
  Tensor dfc1_out = dense_backward(trace.fc1_out, model.fc2, dlogits, grads.fc2);
  Tensor dfc1_pre = relu_backward(trace.fc1_pre, dfc1_out);
  Tensor dflat = dense_backward(trace.flat, model.fc1, dfc1_pre, grads.fc1);

  Tensor dpool = Tensor::zeros_like(trace.pooled.out);
  for (std::size_t i = 0; i < dpool.size(); ++i) dpool[i] = dflat[i];
  Tensor dact = maxpool_backward(trace.pooled, dpool, trace.pool_input.shape());

  for (int l = static_cast<int>(model.convs.size()) - 1; l >= 0; --l) {
    const std::size_t li = static_cast<std::size_t>(l);
    Tensor dpre = relu_backward(trace.conv_outputs[li], dact);
    dact = conv_backward(trace.conv_inputs[li], model.convs[li], dpre, grads.convs[li]);
  }
  return loss;
}

int predict(const Model& model, const Tensor& image) {
  const Tensor probs = model_forward(model, image);
  std::size_t best = 0;
  for (std::size_t i = 1; i < probs.size(); ++i)
    if (probs[i] > probs[best]) best = i;
  return static_cast<int>(best);
}

double predict_positive_prob(const Model& model, const Tensor& image) {
  return model_forward(model, image)[1];
}

Tensor image_tensor(const RasterImage& img) {
  Tensor t({1, img.side, img.side});
  for (std::size_t i = 0; i < img.pixels.size(); ++i) t[i] = img.pixels[i];
  return t;
}

// ---- Weight file I/O ----

namespace {

constexpr char kMagic[5] = {'P', 'S', 'D', 'W', '1'};

void write_i32(std::ostream& out, std::int32_t v) {
  unsigned char buf[4];
  for (int i = 0; i < 4; ++i) buf[i] = static_cast<unsigned char>((static_cast<std::uint32_t>(v) >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 4);
}

std::int32_t read_i32(std::istream& in) {
  unsigned char buf[4];
  in.read(reinterpret_cast<char*>(buf), 4);
  if (!in) throw DataError("weight file truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[i]) << (8 * i);
  return static_cast<std::int32_t>(v);
}

void write_f64(std::ostream& out, double v) {
  const std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
  unsigned char buf[8];
  for (int i = 0; i < 8; ++i) buf[i] = static_cast<unsigned char>((bits >> (8 * i)) & 0xff);
  out.write(reinterpret_cast<const char*>(buf), 8);
}

double read_f64(std::istream& in) {
  unsigned char buf[8];
  in.read(reinterpret_cast<char*>(buf), 8);
  if (!in) throw DataError("weight file truncated");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

void write_tensor(std::ostream& out, const Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) write_f64(out, t[i]);
}

void read_tensor(std::istream& in, Tensor& t) {
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = read_f64(in);
}

}  // namespace

void save_model(const Model& model, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot open weight file for writing: " + path.string());
  out.write(kMagic, sizeof(kMagic));
  write_i32(out, model.config.conv_layers);
  write_i32(out, model.config.filters);
  write_i32(out, model.config.fc_hidden);
  write_i32(out, model.config.num_classes);
  write_i32(out, model.config.input_side);
  for (const ConvLayer& conv : model.convs) {
    write_tensor(out, conv.weights);
    write_tensor(out, conv.bias);
  }
  write_tensor(out, model.fc1.weights);
  write_tensor(out, model.fc1.bias);
  write_tensor(out, model.fc2.weights);
  write_tensor(out, model.fc2.bias);
  if (!out) throw DataError("failed writing weight file: " + path.string());
}

Model load_model(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open weight file: " + path.string());
  char magic[5];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0)
    throw DataError("not a PSDW1 weight file: " + path.string());

  ModelConfig config;
  config.conv_layers = read_i32(in);
  config.filters = read_i32(in);
  config.fc_hidden = read_i32(in);
  config.num_classes = read_i32(in);
  config.input_side = read_i32(in);
  Model model = init_model(config, 0);
  for (ConvLayer& conv : model.convs) {
    read_tensor(in, conv.weights);
    read_tensor(in, conv.bias);
  }
  read_tensor(in, model.fc1.weights);
  read_tensor(in, model.fc1.bias);
  read_tensor(in, model.fc2.weights);
  read_tensor(in, model.fc2.bias);
  in.peek();
  if (!in.eof()) throw DataError("trailing bytes in weight file: " + path.string());
  return model;
}

}  // namespace psd
