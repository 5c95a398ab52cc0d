// The convolutional detector: two 3x3 conv pairs with 2x2 poolings and
// dropout, a 1024-unit dense layer, and a 2-class softmax head. With the
// production 12x40x1 input the stack reaches 3x10x256 = 7680 features at
// the flatten, which pins the window geometry of the feature module.
//
// Dimensions are parameters so the gradient suite can run the same code on
// small random instances.
#pragma once

#include <array>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "droneguard/common.hpp"
#include "droneguard/nn/layers.hpp"
#include "droneguard/nn/tensor.hpp"

namespace droneguard::nn {

struct CnnArch {
  int height = 12, width = 40, in_ch = 1;
  int c1 = 32, c2 = 32, c3 = 256, c4 = 256;
  int fc_hidden = 1024;
  int classes = 2;
  double dropout_p = 0.5;

  int pooled_height() const { return height / 4; }
  int pooled_width() const { return width / 4; }
  int flatten_size() const { return pooled_height() * pooled_width() * c4; }
  int input_size() const { return height * width * in_ch; }

  void validate() const {
    if (height % 4 != 0 || width % 4 != 0)
      throw ConfigError("CnnArch: two 2x2 poolings need height and width divisible by 4");
    if (in_ch < 1 || c1 < 1 || c2 < 1 || c3 < 1 || c4 < 1 || fc_hidden < 1 || classes < 2)
      throw ConfigError("CnnArch: all sizes must be positive");
    if (!(dropout_p >= 0.0 && dropout_p < 1.0))
      throw ConfigError("CnnArch: dropout_p must lie in [0, 1)");
  }
};

struct ShapeTraceEntry {
  std::string layer;
  std::vector<int> dims;  // per sample, batch axis omitted
};

template <typename T>
struct CnnNet {
  CnnArch arch;
  Conv2d<T> conv1, conv2, conv3, conv4;
  Relu<T> relu1, relu2, relu3, relu4, relu5;
  MaxPool2x2<T> pool1, pool2;
  Dropout<T> drop1, drop2, drop3;
  Dense<T> fc1, fc2;
  std::mt19937_64 dropout_rng{0};

  // Forward buffers, grown on demand.
  std::vector<T> a1, a2, p1, a3, a4, p2, f1, logits, probs;

  explicit CnnNet(const CnnArch& a = {}) : arch(a) {
    arch.validate();
    conv1 = Conv2d<T>("conv1", arch.in_ch, arch.c1);
    conv2 = Conv2d<T>("conv2", arch.c1, arch.c2);
    conv3 = Conv2d<T>("conv3", arch.c2, arch.c3);
    conv4 = Conv2d<T>("conv4", arch.c3, arch.c4);
    drop1.p = drop2.p = drop3.p = arch.dropout_p;
    fc1 = Dense<T>("fc1", arch.flatten_size(), arch.fc_hidden);
    fc2 = Dense<T>("fc2", arch.fc_hidden, arch.classes);
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    conv1.init(rng);
    conv2.init(rng);
    conv3.init(rng);
    conv4.init(rng);
    fc1.init(rng);
    fc2.init(rng);
    dropout_rng.seed(seed ^ 0x9e3779b97f4a7c15ull);
  }

  std::vector<TensorT<T>*> params() {
    return {&conv1.w, &conv1.b, &conv2.w, &conv2.b, &conv3.w, &conv3.b,
            &conv4.w, &conv4.b, &fc1.w,   &fc1.b,   &fc2.w,   &fc2.b};
  }

  // Returns per-sample class probabilities (batch x classes) in `probs`.
  const T* forward(const T* x, std::size_t batch, bool training,
                   std::vector<ShapeTraceEntry>* trace = nullptr) {
    const int H = arch.height, W = arch.width;
    const int H2 = H / 2, W2 = W / 2, H4 = H / 4, W4 = W / 4;
    a1.resize(batch * static_cast<std::size_t>(H) * W * arch.c1);
    a2.resize(batch * static_cast<std::size_t>(H) * W * arch.c2);
    p1.resize(batch * static_cast<std::size_t>(H2) * W2 * arch.c2);
    a3.resize(batch * static_cast<std::size_t>(H2) * W2 * arch.c3);
    a4.resize(batch * static_cast<std::size_t>(H2) * W2 * arch.c4);
    p2.resize(batch * static_cast<std::size_t>(H4) * W4 * arch.c4);
    f1.resize(batch * static_cast<std::size_t>(arch.fc_hidden));
    logits.resize(batch * static_cast<std::size_t>(arch.classes));
    probs.resize(logits.size());

    conv1.forward(x, batch, H, W, a1.data(), training);
    relu1.forward(a1.data(), a1.size(), training);
    conv2.forward(a1.data(), batch, H, W, a2.data(), training);
    relu2.forward(a2.data(), a2.size(), training);
    pool1.forward(a2.data(), batch, H, W, arch.c2, p1.data());
    drop1.forward(p1.data(), p1.size(), training, dropout_rng);
    conv3.forward(p1.data(), batch, H2, W2, a3.data(), training);
    relu3.forward(a3.data(), a3.size(), training);
    conv4.forward(a3.data(), batch, H2, W2, a4.data(), training);
    relu4.forward(a4.data(), a4.size(), training);
    pool2.forward(a4.data(), batch, H2, W2, arch.c4, p2.data());
    drop2.forward(p2.data(), p2.size(), training, dropout_rng);
    fc1.forward(p2.data(), batch, f1.data(), training);
    relu5.forward(f1.data(), f1.size(), training);
    drop3.forward(f1.data(), f1.size(), training, dropout_rng);
    fc2.forward(f1.data(), batch, logits.data(), training);

    if (trace != nullptr) {
      trace->clear();
      trace->push_back({"input", {H, W, arch.in_ch}});
      trace->push_back({"conv1", {H, W, arch.c1}});
      trace->push_back({"conv2", {H, W, arch.c2}});
      trace->push_back({"pool1", {H2, W2, arch.c2}});
      trace->push_back({"conv3", {H2, W2, arch.c3}});
      trace->push_back({"conv4", {H2, W2, arch.c4}});
      trace->push_back({"pool2", {H4, W4, arch.c4}});
      trace->push_back({"flatten", {arch.flatten_size()}});
      trace->push_back({"fc1", {arch.fc_hidden}});
      trace->push_back({"fc2", {arch.classes}});
    }

    std::vector<int> dummy(batch, 0);
    softmax_cross_entropy(logits.data(), dummy, arch.classes, probs.data(),
                          static_cast<T*>(nullptr));
    return probs.data();
  }

  // Forward in training mode plus full backward; leaves gradients
  // accumulated in the parameter tensors and returns the mean
  // cross-entropy loss.
  double train_step(const T* x, std::size_t batch, const std::vector<int>& labels) {
    if (labels.size() != batch) throw ShapeError("cnn: labels/batch mismatch");
    forward(x, batch, true);
    std::vector<T> dlogits(logits.size());
    const double loss =
        softmax_cross_entropy(logits.data(), labels, arch.classes, probs.data(), dlogits.data());

    std::vector<T> df1(f1.size());
    fc2.backward(dlogits.data(), batch, df1.data());
    drop3.backward(df1.data(), df1.size());
    relu5.backward(df1.data(), df1.size());
    std::vector<T> dp2(p2.size());
    fc1.backward(df1.data(), batch, dp2.data());
    drop2.backward(dp2.data(), dp2.size());
    std::vector<T> da4(a4.size());
    pool2.backward(dp2.data(), da4.data());
    relu4.backward(da4.data(), da4.size());
    std::vector<T> da3(a3.size());
    conv4.backward(da4.data(), batch, da3.data());
    relu3.backward(da3.data(), da3.size());
    std::vector<T> dp1(p1.size());
    conv3.backward(da3.data(), batch, dp1.data());
    drop1.backward(dp1.data(), dp1.size());
    std::vector<T> da2(a2.size());
    pool1.backward(dp1.data(), da2.data());
    relu2.backward(da2.data(), da2.size());
    std::vector<T> da1(a1.size());
    conv2.backward(da2.data(), batch, da1.data());
    relu1.backward(da1.data(), da1.size());
    conv1.backward(da1.data(), batch, nullptr);
    return loss;
  }

  // Name of the first layer whose activations went non-finite, for
  // divergence diagnostics.
  std::string first_nonfinite() const {
    if (!all_finite(a1)) return "conv1";
    if (!all_finite(a2)) return "conv2";
    if (!all_finite(p1)) return "pool1";
    if (!all_finite(a3)) return "conv3";
    if (!all_finite(a4)) return "conv4";
    if (!all_finite(p2)) return "pool2";
    if (!all_finite(f1)) return "fc1";
    if (!all_finite(logits)) return "fc2";
    return "loss";
  }
};

}  // namespace droneguard::nn
