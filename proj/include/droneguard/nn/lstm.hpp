// Stacked bidirectional LSTM detector: three layers of 300 blocks per
// direction over 12 feature frames, classified from the concatenated final
// forward/backward states of the top layer (mean pooling over steps is a
// config alternative). Gates are standard: sigmoid input/forget/output,
// tanh squashing on the candidate and the cell output.
#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "droneguard/common.hpp"
#include "droneguard/nn/layers.hpp"
#include "droneguard/nn/tensor.hpp"

namespace droneguard::nn {

struct RnnArch {
  int input_dim = 40;
  int hidden = 300;
  int num_layers = 3;
  int steps = 12;
  int classes = 2;
  bool mean_pool = false;  // default: final-state concatenation

  int layer_input(int layer) const { return layer == 0 ? input_dim : 2 * hidden; }
  int head_input() const { return 2 * hidden; }

  void validate() const {
    if (input_dim < 1 || hidden < 1 || num_layers < 1 || steps < 1 || classes < 2)
      throw ConfigError("RnnArch: all sizes must be positive");
  }
};

// One step of the LSTM cell given the packed pre-activations z = [i f g o].
// Exposed standalone so the cell-state propagation tests can drive it.
template <typename T>
void lstm_cell_forward(const T* z, const T* c_prev, std::size_t n, T* gate_i, T* gate_f,
                       T* gate_g, T* gate_o, T* c, T* tanh_c, T* h, std::size_t hidden) {
  for (std::size_t b = 0; b < n; ++b) {
    const T* zr = z + b * 4 * hidden;
    for (std::size_t j = 0; j < hidden; ++j) {
      const std::size_t idx = b * hidden + j;
      const T zi = zr[j], zf = zr[hidden + j], zg = zr[2 * hidden + j], zo = zr[3 * hidden + j];
      const T i = T{1} / (T{1} + std::exp(-zi));
      const T f = T{1} / (T{1} + std::exp(-zf));
      const T g = std::tanh(zg);
      const T o = T{1} / (T{1} + std::exp(-zo));
      const T cc = f * c_prev[idx] + i * g;
      const T tc = std::tanh(cc);
      gate_i[idx] = i;
      gate_f[idx] = f;
      gate_g[idx] = g;
      gate_o[idx] = o;
      c[idx] = cc;
      tanh_c[idx] = tc;
      h[idx] = o * tc;
    }
  }
}

template <typename T>
struct BiLstmNet {
  struct DirParams {
    TensorT<T> wx;  // [4H, in]
    TensorT<T> wh;  // [4H, H]
    TensorT<T> b;   // [4H]
  };

  struct DirCache {
    // One entry per step, each batch x hidden (z is batch x 4H).
    std::vector<std::vector<T>> z, i, f, g, o, c, tanh_c, h;
  };

  RnnArch arch;
  std::vector<DirParams> fwd, bwd;  // per layer
  Dense<T> head;

  std::vector<DirCache> fwd_cache, bwd_cache;
  // layer_io[l][t]: input to layer l at actual step t (batch x layer_input(l));
  // layer_io[num_layers][t] holds the top layer's concatenated output.
  std::vector<std::vector<std::vector<T>>> layer_io;
  std::vector<T> head_in, logits, probs;
  std::size_t batch_cache = 0;

  explicit BiLstmNet(const RnnArch& a = {}) : arch(a) {
    arch.validate();
    fwd.resize(arch.num_layers);
    bwd.resize(arch.num_layers);
    for (int l = 0; l < arch.num_layers; ++l) {
      const int in = arch.layer_input(l);
      for (DirParams* d : {&fwd[l], &bwd[l]}) {
        d->wx = TensorT<T>({4 * arch.hidden, in});
        d->wh = TensorT<T>({4 * arch.hidden, arch.hidden});
        d->b = TensorT<T>({4 * arch.hidden});
      }
    }
    head = Dense<T>("head", arch.head_input(), arch.classes);
  }

  void init(std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    const double bound = 1.0 / std::sqrt(static_cast<double>(arch.hidden));
    for (int l = 0; l < arch.num_layers; ++l) {
      for (DirParams* d : {&fwd[l], &bwd[l]}) {
        init_uniform(d->wx, bound, rng);
        init_uniform(d->wh, bound, rng);
        std::fill(d->b.data.begin(), d->b.data.end(), T{0});
        // Forget-gate bias starts at 1 so early training retains state.
        for (int j = 0; j < arch.hidden; ++j) d->b.data[arch.hidden + j] = T{1};
      }
    }
    head.init(rng);
  }

  std::vector<TensorT<T>*> params() {
    std::vector<TensorT<T>*> out;
    for (int l = 0; l < arch.num_layers; ++l) {
      for (DirParams* d : {&fwd[l], &bwd[l]}) {
        out.push_back(&d->wx);
        out.push_back(&d->wh);
        out.push_back(&d->b);
      }
    }
    out.push_back(&head.w);
    out.push_back(&head.b);
    return out;
  }

  // x is batch x (steps * input_dim), one window per row.
  const T* forward(const T* x, std::size_t batch, bool training) {
    const int T_steps = arch.steps, H = arch.hidden, L = arch.num_layers;
    batch_cache = batch;
    layer_io.assign(L + 1, {});
    fwd_cache.assign(L, {});
    bwd_cache.assign(L, {});

    // Step-major input slices.
    layer_io[0].assign(T_steps, std::vector<T>(batch * arch.input_dim));
    for (std::size_t b = 0; b < batch; ++b)
      for (int t = 0; t < T_steps; ++t)
        std::copy(x + (b * T_steps + t) * arch.input_dim,
                  x + (b * T_steps + t + 1) * arch.input_dim,
                  layer_io[0][t].begin() + b * arch.input_dim);

    std::vector<T> z(batch * 4 * H);
    for (int l = 0; l < L; ++l) {
      const int in = arch.layer_input(l);
      layer_io[l + 1].assign(T_steps, std::vector<T>(batch * 2 * H));
      for (int dir = 0; dir < 2; ++dir) {
        DirParams& p = dir == 0 ? fwd[l] : bwd[l];
        DirCache& cache = dir == 0 ? fwd_cache[l] : bwd_cache[l];
        for (auto* arr : {&cache.i, &cache.f, &cache.g, &cache.o, &cache.c, &cache.tanh_c,
                          &cache.h})
          arr->assign(T_steps, std::vector<T>(batch * H));
        cache.z.assign(T_steps, std::vector<T>(batch * 4 * H));
        std::vector<T> h_prev(batch * H, T{0}), c_prev(batch * H, T{0});
        for (int s = 0; s < T_steps; ++s) {
          const int t = dir == 0 ? s : T_steps - 1 - s;
          const std::vector<T>& x_t = layer_io[l][t];
          matmul_nt(z.data(), x_t.data(), p.wx.data.data(), batch, 4 * H, in);
          matmul_nt(z.data(), h_prev.data(), p.wh.data.data(), batch, 4 * H, H, true);
          for (std::size_t b = 0; b < batch; ++b)
            for (int j = 0; j < 4 * H; ++j) z[b * 4 * H + j] += p.b.data[j];
          cache.z[t] = z;
          lstm_cell_forward(z.data(), c_prev.data(), batch, cache.i[t].data(),
                            cache.f[t].data(), cache.g[t].data(), cache.o[t].data(),
                            cache.c[t].data(), cache.tanh_c[t].data(), cache.h[t].data(),
                            static_cast<std::size_t>(H));
          h_prev = cache.h[t];
          c_prev = cache.c[t];
          // Concatenated output: forward states in [0, H), backward in [H, 2H).
          std::vector<T>& out_t = layer_io[l + 1][t];
          for (std::size_t b = 0; b < batch; ++b)
            std::copy(cache.h[t].begin() + b * H, cache.h[t].begin() + (b + 1) * H,
                      out_t.begin() + b * 2 * H + dir * H);
        }
      }
    }

    head_in.assign(batch * arch.head_input(), T{0});
    if (arch.mean_pool) {
      for (int t = 0; t < T_steps; ++t)
        for (std::size_t i = 0; i < head_in.size(); ++i)
          head_in[i] += layer_io[L][t][i] / static_cast<T>(T_steps);
    } else {
      // Final states: forward direction at the last step, backward at step 0.
      for (std::size_t b = 0; b < batch; ++b) {
        std::copy(layer_io[L][T_steps - 1].begin() + b * 2 * H,
                  layer_io[L][T_steps - 1].begin() + b * 2 * H + H, head_in.begin() + b * 2 * H);
        std::copy(layer_io[L][0].begin() + b * 2 * H + H,
                  layer_io[L][0].begin() + (b + 1) * 2 * H, head_in.begin() + b * 2 * H + H);
      }
    }
    logits.resize(batch * arch.classes);
    probs.resize(logits.size());
    head.forward(head_in.data(), batch, logits.data(), training);
    std::vector<int> dummy(batch, 0);
    softmax_cross_entropy(logits.data(), dummy, arch.classes, probs.data(),
                          static_cast<T*>(nullptr));
    return probs.data();
  }

  double train_step(const T* x, std::size_t batch, const std::vector<int>& labels) {
    if (labels.size() != batch) throw ShapeError("bilstm: labels/batch mismatch");
    forward(x, batch, true);
    const int T_steps = arch.steps, H = arch.hidden, L = arch.num_layers;
    std::vector<T> dlogits(logits.size());
    const double loss =
        softmax_cross_entropy(logits.data(), labels, arch.classes, probs.data(), dlogits.data());

    std::vector<T> dhead_in(head_in.size());
    head.backward(dlogits.data(), batch, dhead_in.data());

    // Gradient w.r.t. each layer's concatenated output, step-major.
    std::vector<std::vector<T>> d_out(T_steps, std::vector<T>(batch * 2 * H, T{0}));
    if (arch.mean_pool) {
      for (int t = 0; t < T_steps; ++t)
        for (std::size_t i = 0; i < dhead_in.size(); ++i)
          d_out[t][i] = dhead_in[i] / static_cast<T>(T_steps);
    } else {
      for (std::size_t b = 0; b < batch; ++b) {
        std::copy(dhead_in.begin() + b * 2 * H, dhead_in.begin() + b * 2 * H + H,
                  d_out[T_steps - 1].begin() + b * 2 * H);
        std::copy(dhead_in.begin() + b * 2 * H + H, dhead_in.begin() + (b + 1) * 2 * H,
                  d_out[0].begin() + b * 2 * H + H);
      }
    }

    std::vector<T> dz(batch * 4 * H), dh(batch * H), dc(batch * H), dh_rec(batch * H);
    for (int l = L - 1; l >= 0; --l) {
      const int in = arch.layer_input(l);
      std::vector<std::vector<T>> d_in(T_steps, std::vector<T>(batch * in, T{0}));
      for (int dir = 0; dir < 2; ++dir) {
        DirParams& p = dir == 0 ? fwd[l] : bwd[l];
        DirCache& cache = dir == 0 ? fwd_cache[l] : bwd_cache[l];
        p.wx.ensure_grad();
        p.wh.ensure_grad();
        p.b.ensure_grad();
        std::fill(dh_rec.begin(), dh_rec.end(), T{0});
        std::fill(dc.begin(), dc.end(), T{0});
        // Walk steps in reverse processing order of this direction.
        for (int s = T_steps - 1; s >= 0; --s) {
          const int t = dir == 0 ? s : T_steps - 1 - s;
          for (std::size_t b = 0; b < batch; ++b)
            for (int j = 0; j < H; ++j)
              dh[b * H + j] = d_out[t][b * 2 * H + dir * H + j] + dh_rec[b * H + j];
          const bool first_step = s == 0;
          const T* c_prev_vec =
              first_step ? nullptr : (dir == 0 ? cache.c[t - 1].data() : cache.c[t + 1].data());
          for (std::size_t idx = 0; idx < batch * static_cast<std::size_t>(H); ++idx) {
            const T i = cache.i[t][idx], f = cache.f[t][idx], g = cache.g[t][idx],
                    o = cache.o[t][idx], tc = cache.tanh_c[t][idx];
            const T dho = dh[idx];
            const T dcc = dc[idx] + dho * o * (T{1} - tc * tc);
            const T c_prev = first_step ? T{0} : c_prev_vec[idx];
            const T di = dcc * g, df = dcc * c_prev, dg = dcc * i, do_ = dho * tc;
            const std::size_t b = idx / H, j = idx % H;
            T* dzr = dz.data() + b * 4 * H;
            dzr[j] = di * i * (T{1} - i);
            dzr[H + j] = df * f * (T{1} - f);
            dzr[2 * H + j] = dg * (T{1} - g * g);
            dzr[3 * H + j] = do_ * o * (T{1} - o);
            dc[idx] = dcc * f;
          }
          const std::vector<T>& x_t = layer_io[l][t];
          matmul_tn(p.wx.grad.data(), dz.data(), x_t.data(), 4 * H, in, batch, true);
          if (!first_step) {
            const std::vector<T>& h_prev = dir == 0 ? cache.h[t - 1] : cache.h[t + 1];
            matmul_tn(p.wh.grad.data(), dz.data(), h_prev.data(), 4 * H, H, batch, true);
            matmul(dh_rec.data(), dz.data(), p.wh.data.data(), batch, H, 4 * H);
          }
          for (std::size_t b = 0; b < batch; ++b)
            for (int j = 0; j < 4 * H; ++j) p.b.grad[j] += dz[b * 4 * H + j];
          matmul(d_in[t].data(), dz.data(), p.wx.data.data(), batch, in, 4 * H, true);
        }
      }
      if (l > 0) d_out = std::move(d_in);
    }
    return loss;
  }

  std::string first_nonfinite() const {
    for (int l = 0; l < arch.num_layers; ++l) {
      for (const DirCache* cache : {&fwd_cache[l], &bwd_cache[l]}) {
        for (const auto& h_t : cache->h)
          if (!all_finite(h_t)) return "lstm" + std::to_string(l + 1);
      }
    }
    if (!all_finite(logits)) return "head";
    return "loss";
  }
};

}  // namespace droneguard::nn
