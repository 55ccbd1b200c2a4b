#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>

#include "psd/errors.hpp"
#include "psd/nn.hpp"
#include "psd/rng.hpp"

using namespace psd;

namespace {

Tensor random_tensor(std::vector<int> shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

// Six-nested-loop reference convolution (k3 s1 p1, cross-correlation).
Tensor conv_reference(const Tensor& x, const ConvLayer& layer) {
  const int C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor y({layer.filters, H, W});
  for (int f = 0; f < layer.filters; ++f)
    for (int i = 0; i < H; ++i)
      for (int j = 0; j < W; ++j) {
        double acc = layer.bias[static_cast<std::size_t>(f)];
        for (int c = 0; c < C; ++c)
          for (int u = 0; u < 3; ++u)
            for (int v = 0; v < 3; ++v) {
              const int ii = i + u - 1;
              const int jj = j + v - 1;
              if (ii < 0 || ii >= H || jj < 0 || jj >= W) continue;
              acc += x[(static_cast<std::size_t>(c) * H + ii) * W + jj] *
                     layer.weights[((static_cast<std::size_t>(f) * C + c) * 3 + u) * 3 + v];
            }
        y[(static_cast<std::size_t>(f) * H + i) * W + j] = acc;
      }
  return y;
}

ConvLayer random_conv(int in_channels, int filters, Rng& rng) {
  ConvLayer layer;
  layer.in_channels = in_channels;
  layer.filters = filters;
  layer.weights = random_tensor({filters, in_channels, 3, 3}, rng);
  layer.bias = random_tensor({filters}, rng);
  return layer;
}

double max_rel_error(double analytic, double numeric) {
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), 1e-3});
}

// Central-difference gradient of `loss` with respect to every entry of a
// parameter tensor, compared against the analytic gradient.
double check_gradient(Tensor& param, const Tensor& analytic,
                      const std::function<double()>& loss) {
  const double step = 1e-5;
  double worst = 0.0;
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double saved = param[i];
    param[i] = saved + step;
    const double up = loss();
    param[i] = saved - step;
    const double down = loss();
    param[i] = saved;
    const double numeric = (up - down) / (2.0 * step);
    worst = std::max(worst, max_rel_error(analytic[i], numeric));
  }
  return worst;
}

}  // namespace

TEST_CASE("conv with a delta kernel is the identity") {
  ConvLayer layer;
  layer.in_channels = 1;
  layer.filters = 1;
  layer.weights = Tensor({1, 1, 3, 3});
  layer.weights[4] = 1.0;  // center tap
  layer.bias = Tensor({1});

  Tensor x({1, 1, 1});
  x[0] = 3.75;
  const Tensor y = conv_forward(x, layer);
  CHECK(y[0] == 3.75);

  Rng rng(1);
  const Tensor big = random_tensor({1, 5, 7}, rng);
  CHECK(conv_forward(big, layer) == big);
}

TEST_CASE("all-ones kernel on all-ones 3x3 input sums nine at the center") {
  ConvLayer layer;
  layer.in_channels = 1;
  layer.filters = 1;
  layer.weights = Tensor({1, 1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) layer.weights[i] = 1.0;
  layer.bias = Tensor({1});

  Tensor x({1, 3, 3});
  for (std::size_t i = 0; i < 9; ++i) x[i] = 1.0;
  const Tensor y = conv_forward(x, layer);
  CHECK(y[4] == doctest::Approx(9.0));  // center
  CHECK(y[0] == doctest::Approx(4.0));  // corner sees a 2x2 patch
}

TEST_CASE("conv_forward matches the six-nested-loop reference") {
  Rng rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    const int C = 1 + static_cast<int>(rng.below(3));
    const int F = 1 + static_cast<int>(rng.below(4));
    const ConvLayer layer = random_conv(C, F, rng);
    const Tensor x = random_tensor({C, 5, 5}, rng);
    const Tensor fast = conv_forward(x, layer);
    const Tensor slow = conv_reference(x, layer);
    REQUIRE(fast.size() == slow.size());
    for (std::size_t i = 0; i < fast.size(); ++i)
      CHECK(fast[i] == doctest::Approx(slow[i]).epsilon(1e-10));
  }
}

TEST_CASE("conv_forward rejects channel mismatches") {
  Rng rng(3);
  const ConvLayer layer = random_conv(2, 1, rng);
  const Tensor x = random_tensor({3, 4, 4}, rng);
  CHECK_THROWS_AS(conv_forward(x, layer), DataError);
}

TEST_CASE("relu clamps negatives and is idempotent") {
  Tensor x({3});
  x[0] = -1.0;
  x[1] = 0.0;
  x[2] = 2.0;
  const Tensor y = relu(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);

  Rng rng(4);
  const Tensor r = random_tensor({40}, rng);
  CHECK(relu(relu(r)) == relu(r));

  Tensor negatives({5});
  for (std::size_t i = 0; i < 5; ++i) negatives[i] = -1.0 - static_cast<double>(i);
  for (std::size_t i = 0; i < 5; ++i) CHECK(relu(negatives)[i] == 0.0);
}

TEST_CASE("maxpool shrinks 32x32 to 30x30 and preserves constants") {
  const Tensor x({4, 32, 32});
  const MaxPoolResult pooled = maxpool_forward(x);
  CHECK(pooled.out.dim(0) == 4);
  CHECK(pooled.out.dim(1) == 30);
  CHECK(pooled.out.dim(2) == 30);

  Tensor c({1, 6, 6});
  for (std::size_t i = 0; i < c.size(); ++i) c[i] = 2.5;
  const MaxPoolResult cp = maxpool_forward(c);
  for (std::size_t i = 0; i < cp.out.size(); ++i) CHECK(cp.out[i] == 2.5);
}

TEST_CASE("maxpool matches a sliding-window brute-force oracle") {
  Rng rng(5);
  const Tensor x = random_tensor({2, 6, 6}, rng);
  const MaxPoolResult pooled = maxpool_forward(x);
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 4; ++i)
      for (int j = 0; j < 4; ++j) {
        double best = -1e30;
        for (int u = 0; u < 3; ++u)
          for (int v = 0; v < 3; ++v)
            best = std::max(best, x[(static_cast<std::size_t>(c) * 6 + i + u) * 6 + j + v]);
        CHECK(pooled.out[(static_cast<std::size_t>(c) * 4 + i) * 4 + j] == best);
      }
}

TEST_CASE("maxpool rejects inputs smaller than the window") {
  const Tensor x({1, 2, 5});
  CHECK_THROWS_AS(maxpool_forward(x), DataError);
}

TEST_CASE("dense layer computes W x + b") {
  DenseLayer layer;
  layer.in_features = 2;
  layer.out_features = 2;
  layer.weights = Tensor({2, 2});
  layer.weights[0] = 1.0;
  layer.weights[3] = 1.0;  // identity
  layer.bias = Tensor({2});

  Tensor x({2});
  x[0] = 0.5;
  x[1] = -2.0;
  CHECK(dense_forward(x, layer) == x);

  DenseLayer zero;
  zero.in_features = 2;
  zero.out_features = 2;
  zero.weights = Tensor({2, 2});
  zero.bias = Tensor({2});
  zero.bias[0] = 1.0;
  zero.bias[1] = 2.0;
  const Tensor y = dense_forward(x, zero);
  CHECK(y[0] == 1.0);
  CHECK(y[1] == 2.0);

  // dot-product oracle
  Rng rng(6);
  DenseLayer rnd;
  rnd.in_features = 7;
  rnd.out_features = 3;
  rnd.weights = random_tensor({3, 7}, rng);
  rnd.bias = random_tensor({3}, rng);
  const Tensor v = random_tensor({7}, rng);
  const Tensor out = dense_forward(v, rnd);
  for (int o = 0; o < 3; ++o) {
    double acc = rnd.bias[static_cast<std::size_t>(o)];
    for (int i = 0; i < 7; ++i) acc += rnd.weights[static_cast<std::size_t>(o) * 7 + i] * v[static_cast<std::size_t>(i)];
    CHECK(out[static_cast<std::size_t>(o)] == doctest::Approx(acc).epsilon(1e-12));
  }

  Tensor wrong({3});
  CHECK_THROWS_AS(dense_forward(wrong, rnd), DataError);
}

TEST_CASE("softmax basics and laws") {
  Tensor two({2});
  const Tensor p = softmax(two);
  CHECK(p[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(p[1] == doctest::Approx(0.5).epsilon(1e-15));

  Tensor skew({2});
  skew[1] = std::log(3.0);
  const Tensor q = softmax(skew);
  CHECK(q[0] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(q[1] == doctest::Approx(0.75).epsilon(1e-12));

  Rng rng(7);
  for (int trial = 0; trial < 25; ++trial) {
    const int k = 2 + static_cast<int>(rng.below(9));
    Tensor logits = random_tensor({k}, rng, -30.0, 30.0);
    const Tensor probs = softmax(logits);
    double sum = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
      CHECK(probs[i] > 0.0);
      sum += probs[i];
    }
    CHECK(std::abs(sum - 1.0) <= 1e-12);

    const double shift = rng.uniform(-50.0, 50.0);
    Tensor shifted = logits;
    for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += shift;
    const Tensor probs2 = softmax(shifted);
    for (std::size_t i = 0; i < probs.size(); ++i)
      CHECK(probs2[i] == doctest::Approx(probs[i]).epsilon(1e-9));
  }
}

TEST_CASE("cross entropy values and guard") {
  Tensor sure({2});
  sure[0] = 1.0;
  CHECK(cross_entropy(sure, 0) == doctest::Approx(0.0));
  CHECK(cross_entropy(sure, 1) == doctest::Approx(-std::log(1e-12)));  // floored

  Tensor even({2});
  even[0] = 0.5;
  even[1] = 0.5;
  CHECK(cross_entropy(even, 0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(cross_entropy(even, 2), DataError);
  CHECK_THROWS_AS(cross_entropy(even, -1), DataError);
}

TEST_CASE("loss gradient w.r.t. logits is probs minus one-hot") {
  Rng rng(8);
  Tensor logits = random_tensor({4}, rng);
  const Tensor probs = softmax(logits);
  const Tensor grad = softmax_cross_entropy_grad(probs, 2);
  for (std::size_t i = 0; i < 4; ++i)
    CHECK(grad[i] == doctest::Approx(probs[i] - (i == 2 ? 1.0 : 0.0)).epsilon(1e-15));

  // and it matches finite differences of the combined softmax+CE
  const double step = 1e-5;
  for (std::size_t i = 0; i < 4; ++i) {
    Tensor up = logits, down = logits;
    up[i] += step;
    down[i] -= step;
    const double numeric = (cross_entropy(softmax(up), 2) - cross_entropy(softmax(down), 2)) / (2 * step);
    CHECK(max_rel_error(grad[i], numeric) < 1e-4);
  }
}

TEST_CASE("sgd_step applies w <- w - lr * g") {
  Tensor w({1}), g({1});
  w[0] = 1.0;
  g[0] = 0.5;
  sgd_step(w, g, 0.1);
  CHECK(w[0] == doctest::Approx(0.95).epsilon(1e-15));

  Tensor w2({3});
  const Tensor zero({3});
  Tensor before = w2;
  sgd_step(w2, zero, 0.5);
  CHECK(w2 == before);

  // two half-steps equal one full step for a fixed gradient
  Tensor a({1}), b({1}), grad({1});
  a[0] = b[0] = 2.0;
  grad[0] = 0.25;
  sgd_step(a, grad, 0.1);
  sgd_step(b, grad, 0.05);
  sgd_step(b, grad, 0.05);
  CHECK(a[0] == doctest::Approx(b[0]).epsilon(1e-15));

  Tensor wrong({2});
  CHECK_THROWS_AS(sgd_step(wrong, grad, 0.1), DataError);
}

TEST_CASE("init_model is deterministic, bounded, and seed-sensitive") {
  ModelConfig config;
  config.input_side = 8;
  config.filters = 3;
  const Model a = init_model(config, 99);
  const Model b = init_model(config, 99);
  CHECK(a.convs[0].weights == b.convs[0].weights);
  CHECK(a.fc1.weights == b.fc1.weights);
  CHECK(a.fc2.weights == b.fc2.weights);

  const double conv_bound = std::sqrt(6.0 / 9.0);
  for (std::size_t i = 0; i < a.convs[0].weights.size(); ++i)
    CHECK(std::abs(a.convs[0].weights[i]) <= conv_bound);
  const double fc1_bound = std::sqrt(6.0 / a.fc1.in_features);
  for (std::size_t i = 0; i < a.fc1.weights.size(); ++i)
    CHECK(std::abs(a.fc1.weights[i]) <= fc1_bound);
  for (std::size_t i = 0; i < a.convs[0].bias.size(); ++i) CHECK(a.convs[0].bias[i] == 0.0);

  const Model c = init_model(config, 100);
  CHECK(a.convs[0].weights != c.convs[0].weights);
}

TEST_CASE("the architecture shape chain holds at every stage") {
  // 32x32 input -> conv 32x32 -> pool 30x30 -> flatten -> 64 -> 2.
  ModelConfig config;  // defaults: 1 conv layer, 15 filters, fc 64, 2 classes, side 32
  const Model model = init_model(config, 3);

  Rng rng(9);
  const Tensor image = random_tensor({1, 32, 32}, rng, 0.0, 1.0);
  const Tensor conv_out = conv_forward(image, model.convs[0]);
  CHECK(conv_out.shape() == std::vector<int>{15, 32, 32});
  const MaxPoolResult pooled = maxpool_forward(relu(conv_out));
  CHECK(pooled.out.shape() == std::vector<int>{15, 30, 30});
  CHECK(model.fc1.in_features == 15 * 30 * 30);
  CHECK(model.fc1.out_features == 64);
  CHECK(model.fc2.in_features == 64);
  CHECK(model.fc2.out_features == 2);

  const Tensor probs = model_forward(model, image);
  CHECK(probs.shape() == std::vector<int>{2});
  CHECK(probs[0] + probs[1] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("two-conv-layer models keep spatial size through the stack") {
  ModelConfig config;
  config.conv_layers = 2;
  config.filters = 4;
  config.input_side = 16;
  const Model model = init_model(config, 5);
  CHECK(model.convs.size() == 2);
  CHECK(model.convs[0].in_channels == 1);
  CHECK(model.convs[1].in_channels == 4);

  Rng rng(10);
  const Tensor image = random_tensor({1, 16, 16}, rng, 0.0, 1.0);
  CHECK(model_forward(model, image).size() == 2);
}

TEST_CASE("analytic gradients match central finite differences on a tiny net") {
  // 1 conv filter, 4x4 input, so the whole parameter vector is fd-checkable.
  ModelConfig config;
  config.conv_layers = 1;
  config.filters = 1;
  config.fc_hidden = 3;
  config.input_side = 4;
  Model model = init_model(config, 11);

  Rng rng(12);
  Tensor image = random_tensor({1, 4, 4}, rng, 0.05, 1.0);
  const int label = 1;

  ModelGrads grads = ModelGrads::zeros(model);
  backward(model, image, label, grads);

  const auto loss = [&] {
    return cross_entropy(model_forward(model, image), label);
  };

  double worst = 0.0;
  worst = std::max(worst, check_gradient(model.convs[0].weights, grads.convs[0].weights, loss));
  worst = std::max(worst, check_gradient(model.convs[0].bias, grads.convs[0].bias, loss));
  worst = std::max(worst, check_gradient(model.fc1.weights, grads.fc1.weights, loss));
  worst = std::max(worst, check_gradient(model.fc1.bias, grads.fc1.bias, loss));
  worst = std::max(worst, check_gradient(model.fc2.weights, grads.fc2.weights, loss));
  worst = std::max(worst, check_gradient(model.fc2.bias, grads.fc2.bias, loss));
  CHECK(worst < 1e-4);
}

TEST_CASE("a zero output layer sends zero gradient into the trunk") {
  ModelConfig config;
  config.filters = 2;
  config.fc_hidden = 3;
  config.input_side = 5;
  Model model = init_model(config, 13);
  model.fc2.weights = Tensor::zeros_like(model.fc2.weights);
  model.fc2.bias = Tensor::zeros_like(model.fc2.bias);

  Rng rng(14);
  const Tensor image = random_tensor({1, 5, 5}, rng, 0.0, 1.0);
  ModelGrads grads = ModelGrads::zeros(model);
  backward(model, image, 0, grads);
  // With symmetric (0.5, 0.5) output and zero fc2 weights, nothing flows back
  // past fc2's own parameters.
  for (std::size_t i = 0; i < grads.fc1.weights.size(); ++i) CHECK(grads.fc1.weights[i] == 0.0);
  for (std::size_t i = 0; i < grads.convs[0].weights.size(); ++i)
    CHECK(grads.convs[0].weights[i] == 0.0);
  bool fc2_nonzero = false;
  for (std::size_t i = 0; i < grads.fc2.weights.size(); ++i)
    fc2_nonzero |= grads.fc2.weights[i] != 0.0;
  CHECK(fc2_nonzero);
}

TEST_CASE("loss strictly decreases over the first 5 SGD steps on a separable batch") {
  ModelConfig config;
  config.filters = 2;
  config.fc_hidden = 8;
  config.input_side = 8;
  Model model = init_model(config, 15);

  // Half the images light the top rows, half the bottom rows.
  std::vector<Tensor> images;
  std::vector<int> labels;
  for (int k = 0; k < 8; ++k) {
    Tensor img({1, 8, 8});
    const int label = k % 2;
    for (int c = 0; c < 8; ++c) img[(label == 0 ? 1u : 6u) * 8 + c] = 1.0;
    img[static_cast<std::size_t>(k) % 64] += 0.25;  // mild variety
    images.push_back(img);
    labels.push_back(label);
  }

  const auto batch_loss = [&] {
    double total = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i)
      total += cross_entropy(model_forward(model, images[i]), labels[i]);
    return total / static_cast<double>(images.size());
  };

  double previous = batch_loss();
  for (int step = 0; step < 5; ++step) {
    ModelGrads grads = ModelGrads::zeros(model);
    for (std::size_t i = 0; i < images.size(); ++i) backward(model, images[i], labels[i], grads);
    grads.scale(1.0 / static_cast<double>(images.size()));
    sgd_step(model, grads, 0.01);
    const double now = batch_loss();
    CHECK(now < previous);
    previous = now;
  }
}

TEST_CASE("weight files round-trip bitwise") {
  ModelConfig config;
  config.filters = 4;
  config.fc_hidden = 6;
  config.input_side = 8;
  const Model model = init_model(config, 21);

  const auto path = std::filesystem::temp_directory_path() / "psd_test_model.psdw";
  save_model(model, path);
  const Model back = load_model(path);
  CHECK(back.config.filters == 4);
  CHECK(back.config.input_side == 8);
  CHECK(back.convs[0].weights == model.convs[0].weights);
  CHECK(back.convs[0].bias == model.convs[0].bias);
  CHECK(back.fc1.weights == model.fc1.weights);
  CHECK(back.fc2.bias == model.fc2.bias);
  std::filesystem::remove(path);
}

TEST_CASE("weight loader rejects foreign bytes") {
  const auto path = std::filesystem::temp_directory_path() / "psd_test_bogus.psdw";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("NOTAMODEL", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_model(path), DataError);
  std::filesystem::remove(path);
}
