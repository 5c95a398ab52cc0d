// Training protocol shared by both networks: seeded shuffling every epoch,
// minibatch updates (Adam by default, plain SGD for ablation), validation
// accuracy after each epoch, and early stopping that returns the
// best-validation-epoch weights once `patience` epochs pass without
// improvement.
#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <ostream>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "droneguard/common.hpp"
#include "droneguard/nn/tensor.hpp"

namespace droneguard::nn {

// Set by the CLI's SIGINT handler; the loop finishes the current batch,
// restores the best weights and returns with `interrupted` set so a
// checkpoint can still be written.
inline std::atomic<bool> g_training_interrupted{false};

struct TrainConfig {
  double learning_rate = 0.001;
  int batch_size = 128;
  int patience = 3;
  int max_epochs = 50;
  std::uint64_t seed = 0;
  std::string optimizer = "adam";

  void validate() const {
    if (!(learning_rate > 0.0)) throw ConfigError("TrainConfig: learning_rate must be positive");
    if (patience < 1) throw ConfigError("TrainConfig: patience must be >= 1");
    if (batch_size < 1 || max_epochs < 1)
      throw ConfigError("TrainConfig: batch_size and max_epochs must be >= 1");
    if (optimizer != "adam" && optimizer != "sgd")
      throw ConfigError("TrainConfig: optimizer must be adam or sgd");
  }
};

struct EpochStats {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainHistory {
  std::vector<EpochStats> epochs;
  int best_epoch = 0;
  double best_val_accuracy = 0.0;
  bool interrupted = false;
  bool diverged = false;
  std::string divergence_note;
};

inline void write_history_csv(const TrainHistory& h, std::ostream& os) {
  os << "epoch,loss,val_accuracy\n";
  os.precision(9);
  for (const auto& e : h.epochs)
    os << e.epoch << ',' << e.train_loss << ',' << e.val_accuracy << '\n';
}

// Flat supervised window set. `clip_ids` carry provenance so splits can be
// checked for leakage at the clip level.
struct WindowDataset {
  std::size_t window_size = 0;
  std::vector<double> x;  // size() x window_size, row-major
  std::vector<int> labels;
  std::vector<std::string> clip_ids;

  std::size_t size() const { return labels.size(); }
  const double* window(std::size_t i) const { return x.data() + i * window_size; }
};

struct Adam {
  double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m, v;

  template <typename T>
  void update(std::vector<TensorT<T>*>& params, double lr) {
    if (m.empty()) {
      m.resize(params.size());
      v.resize(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        m[i].assign(params[i]->data.size(), 0.0);
        v[i].assign(params[i]->data.size(), 0.0);
      }
    }
    ++step;
    const double bc1 = 1.0 - std::pow(beta1, step);
    const double bc2 = 1.0 - std::pow(beta2, step);
    for (std::size_t i = 0; i < params.size(); ++i) {
      TensorT<T>& p = *params[i];
      p.ensure_grad();
      for (std::size_t j = 0; j < p.data.size(); ++j) {
        const double g = static_cast<double>(p.grad[j]);
        m[i][j] = beta1 * m[i][j] + (1.0 - beta1) * g;
        v[i][j] = beta2 * v[i][j] + (1.0 - beta2) * g * g;
        p.data[j] -= static_cast<T>(lr * (m[i][j] / bc1) / (std::sqrt(v[i][j] / bc2) + eps));
      }
    }
  }
};

template <typename Model>
double evaluate_accuracy(Model& model, const WindowDataset& data, std::size_t batch = 256) {
  using T = std::remove_reference_t<decltype(model.probs[0])>;
  if (data.size() == 0) return 0.0;
  std::size_t correct = 0;
  std::vector<T> xbuf;
  for (std::size_t b0 = 0; b0 < data.size(); b0 += batch) {
    const std::size_t n = std::min(batch, data.size() - b0);
    xbuf.assign(data.x.begin() + b0 * data.window_size,
                data.x.begin() + (b0 + n) * data.window_size);
    const T* probs = model.forward(xbuf.data(), n, false);
    for (std::size_t i = 0; i < n; ++i) {
      const int pred = probs[i * 2] >= probs[i * 2 + 1] ? 0 : 1;
      correct += pred == data.labels[b0 + i];
    }
  }
  return static_cast<double>(correct) / data.size();
}

namespace train_detail {

inline void check_disjoint(const WindowDataset& train_set, const WindowDataset& val_set) {
  std::set<std::string> train_clips(train_set.clip_ids.begin(), train_set.clip_ids.end());
  for (const auto& id : val_set.clip_ids)
    if (train_clips.count(id) > 0)
      throw ConfigError("train: validation clip '" + id +
                        "' also appears in the training set; split by clip");
}

template <typename T>
std::vector<std::vector<T>> snapshot(std::vector<TensorT<T>*>& params) {
  std::vector<std::vector<T>> out;
  out.reserve(params.size());
  for (auto* p : params) out.push_back(p->data);
  return out;
}

template <typename T>
void restore(std::vector<TensorT<T>*>& params, const std::vector<std::vector<T>>& snap) {
  for (std::size_t i = 0; i < params.size(); ++i) params[i]->data = snap[i];
}

}  // namespace train_detail

// Trains `model` in place (seeded init included) and leaves it holding the
// weights of the best-validation-accuracy epoch.
template <typename Model>
TrainHistory train_model(Model& model, const WindowDataset& train_set,
                         const WindowDataset& val_set, const TrainConfig& cfg) {
  cfg.validate();
  if (train_set.size() == 0 || val_set.size() == 0)
    throw InsufficientDataError("train: empty training or validation set");
  train_detail::check_disjoint(train_set, val_set);

  model.init(cfg.seed);
  auto params = model.params();
  Adam adam;
  std::mt19937_64 rng(cfg.seed);

  TrainHistory history;
  auto best = train_detail::snapshot(params);
  int stale = 0;
  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), 0);
  std::vector<double> xbuf;
  std::vector<int> lbuf;

  for (int epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t b0 = 0; b0 < order.size(); b0 += cfg.batch_size) {
      if (g_training_interrupted.load()) {
        history.interrupted = true;
        train_detail::restore(params, best);
        return history;
      }
      const std::size_t n = std::min<std::size_t>(cfg.batch_size, order.size() - b0);
      xbuf.resize(n * train_set.window_size);
      lbuf.resize(n);
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t src = order[b0 + i];
        std::copy(train_set.window(src), train_set.window(src) + train_set.window_size,
                  xbuf.begin() + i * train_set.window_size);
        lbuf[i] = train_set.labels[src];
      }
      for (auto* p : params) {
        p->ensure_grad();
        p->zero_grad();
      }
      const double loss = model.train_step(xbuf.data(), n, lbuf);
      if (!std::isfinite(loss)) {
        history.diverged = true;
        history.divergence_note = "non-finite loss at epoch " + std::to_string(epoch) +
                                  ", batch " + std::to_string(b0 / cfg.batch_size) +
                                  ", first non-finite layer: " + model.first_nonfinite();
        train_detail::restore(params, best);
        return history;
      }
      if (cfg.optimizer == "adam") {
        adam.update(params, cfg.learning_rate);
      } else {
        for (auto* p : params)
          for (std::size_t j = 0; j < p->data.size(); ++j)
            p->data[j] -= cfg.learning_rate * p->grad[j];
      }
      loss_sum += loss * n;
      seen += n;
    }

    const double val_acc = evaluate_accuracy(model, val_set);
    history.epochs.push_back({epoch, loss_sum / seen, val_acc});
    if (val_acc > history.best_val_accuracy || history.best_epoch == 0) {
      history.best_val_accuracy = val_acc;
      history.best_epoch = epoch;
      best = train_detail::snapshot(params);
      stale = 0;
    } else {
      ++stale;
    }
    if (stale >= cfg.patience) break;
  }

  train_detail::restore(params, best);
  return history;
}

}  // namespace droneguard::nn
