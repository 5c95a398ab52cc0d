// Versioned binary containers for the trained detectors, plus model-kind
// sniffing so the CLI can dispatch on the file alone. Every container
// carries the architecture descriptor, parameter blobs, a training echo
// (best epoch and config) and the effective run-config echo used to
// rebuild matching features at detect time.
#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "droneguard/common.hpp"
#include "droneguard/gmm.hpp"
#include "droneguard/nn/cnn.hpp"
#include "droneguard/nn/lstm.hpp"
#include "droneguard/nn/train.hpp"

namespace droneguard {

enum class ModelKind { kGmm, kCnn, kRnn };

inline std::string model_kind_name(ModelKind k) {
  switch (k) {
    case ModelKind::kGmm: return "gmm";
    case ModelKind::kCnn: return "cnn";
    default: return "rnn";
  }
}

inline constexpr char kNnMagic[8] = {'D', 'G', 'N', 'N', '0', '\0', '\0', '\0'};
inline constexpr std::uint32_t kNnVersion = 1;

namespace model_detail {

template <typename T>
void write_params(std::ostream& os, std::vector<nn::TensorT<T>*> params) {
  detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(params.size()));
  for (const auto* p : params) {
    detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(p->shape.size()));
    for (int d : p->shape) detail::write_le<std::int32_t>(os, d);
    detail::write_le<std::uint64_t>(os, p->data.size());
    for (T v : p->data) detail::write_le<double>(os, static_cast<double>(v));
  }
}

template <typename T>
void read_params(std::istream& is, std::vector<nn::TensorT<T>*> params) {
  const auto count = detail::read_le<std::uint32_t>(is);
  if (count != params.size())
    throw DecodeError("model container: expected " + std::to_string(params.size()) +
                      " parameter tensors, found " + std::to_string(count));
  for (auto* p : params) {
    const auto rank = detail::read_le<std::uint32_t>(is);
    std::vector<int> shape(rank);
    for (auto& d : shape) d = detail::read_le<std::int32_t>(is);
    if (shape != p->shape) throw DecodeError("model container: parameter shape mismatch");
    const auto n = detail::read_le<std::uint64_t>(is);
    if (n != p->data.size()) throw DecodeError("model container: parameter size mismatch");
    for (auto& v : p->data) v = static_cast<T>(detail::read_le<double>(is));
  }
}

inline nlohmann::json training_echo(const nn::TrainConfig& cfg, const nn::TrainHistory& hist) {
  nlohmann::json j;
  j["learning_rate"] = cfg.learning_rate;
  j["batch_size"] = cfg.batch_size;
  j["patience"] = cfg.patience;
  j["max_epochs"] = cfg.max_epochs;
  j["seed"] = cfg.seed;
  j["optimizer"] = cfg.optimizer;
  j["best_epoch"] = hist.best_epoch;
  j["best_val_accuracy"] = hist.best_val_accuracy;
  j["epochs_run"] = hist.epochs.size();
  j["interrupted"] = hist.interrupted;
  return j;
}

}  // namespace model_detail

// --- CNN --------------------------------------------------------------------

inline void save_cnn(nn::CnnNet<double>& net, const std::string& path,
                     const nn::TrainConfig& cfg, const nn::TrainHistory& hist,
                     const std::string& config_echo) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kNnMagic, 8);
  detail::write_le<std::uint32_t>(os, kNnVersion);
  detail::write_string(os, "cnn");
  nlohmann::json arch;
  arch["height"] = net.arch.height;
  arch["width"] = net.arch.width;
  arch["in_ch"] = net.arch.in_ch;
  arch["channels"] = {net.arch.c1, net.arch.c2, net.arch.c3, net.arch.c4};
  arch["fc_hidden"] = net.arch.fc_hidden;
  arch["classes"] = net.arch.classes;
  arch["dropout_p"] = net.arch.dropout_p;
  detail::write_string(os, arch.dump());
  model_detail::write_params(os, net.params());
  detail::write_string(os, model_detail::training_echo(cfg, hist).dump());
  detail::write_string(os, config_echo);
  if (!os) throw IoError("write failed: " + path);
}

// --- BiLSTM -----------------------------------------------------------------

inline void save_rnn(nn::BiLstmNet<double>& net, const std::string& path,
                     const nn::TrainConfig& cfg, const nn::TrainHistory& hist,
                     const std::string& config_echo) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(kNnMagic, 8);
  detail::write_le<std::uint32_t>(os, kNnVersion);
  detail::write_string(os, "bilstm");
  nlohmann::json arch;
  arch["input_dim"] = net.arch.input_dim;
  arch["hidden"] = net.arch.hidden;
  arch["num_layers"] = net.arch.num_layers;
  arch["steps"] = net.arch.steps;
  arch["classes"] = net.arch.classes;
  arch["mean_pool"] = net.arch.mean_pool;
  detail::write_string(os, arch.dump());
  model_detail::write_params(os, net.params());
  detail::write_string(os, model_detail::training_echo(cfg, hist).dump());
  detail::write_string(os, config_echo);
  if (!os) throw IoError("write failed: " + path);
}

struct NnContainerHeader {
  std::string kind;
  nlohmann::json arch;
};

inline NnContainerHeader read_nn_header(std::istream& is, const std::string& path) {
  char magic[8];
  is.read(magic, 8);
  if (!is || std::memcmp(magic, kNnMagic, 8) != 0)
    throw DecodeError(path + ": not a neural model container");
  const auto version = detail::read_le<std::uint32_t>(is);
  if (version != kNnVersion)
    throw DecodeError(path + ": unsupported model container version " + std::to_string(version));
  NnContainerHeader h;
  h.kind = detail::read_string(is);
  h.arch = nlohmann::json::parse(detail::read_string(is));
  return h;
}

inline nn::CnnNet<double> load_cnn(const std::string& path, std::string* config_echo = nullptr,
                                   nlohmann::json* training = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  const NnContainerHeader h = read_nn_header(is, path);
  if (h.kind != "cnn") throw DecodeError(path + ": contains a " + h.kind + " model, not a cnn");
  nn::CnnArch arch;
  arch.height = h.arch.at("height").get<int>();
  arch.width = h.arch.at("width").get<int>();
  arch.in_ch = h.arch.at("in_ch").get<int>();
  const auto ch = h.arch.at("channels");
  arch.c1 = ch.at(0).get<int>();
  arch.c2 = ch.at(1).get<int>();
  arch.c3 = ch.at(2).get<int>();
  arch.c4 = ch.at(3).get<int>();
  arch.fc_hidden = h.arch.at("fc_hidden").get<int>();
  arch.classes = h.arch.at("classes").get<int>();
  arch.dropout_p = h.arch.at("dropout_p").get<double>();
  nn::CnnNet<double> net(arch);
  model_detail::read_params(is, net.params());
  const std::string echo_training = detail::read_string(is);
  if (training != nullptr) *training = nlohmann::json::parse(echo_training);
  const std::string echo = detail::read_string(is);
  if (config_echo != nullptr) *config_echo = echo;
  return net;
}

inline nn::BiLstmNet<double> load_rnn(const std::string& path, std::string* config_echo = nullptr,
                                      nlohmann::json* training = nullptr) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  const NnContainerHeader h = read_nn_header(is, path);
  if (h.kind != "bilstm")
    throw DecodeError(path + ": contains a " + h.kind + " model, not a bilstm");
  nn::RnnArch arch;
  arch.input_dim = h.arch.at("input_dim").get<int>();
  arch.hidden = h.arch.at("hidden").get<int>();
  arch.num_layers = h.arch.at("num_layers").get<int>();
  arch.steps = h.arch.at("steps").get<int>();
  arch.classes = h.arch.at("classes").get<int>();
  arch.mean_pool = h.arch.at("mean_pool").get<bool>();
  nn::BiLstmNet<double> net(arch);
  model_detail::read_params(is, net.params());
  const std::string echo_training = detail::read_string(is);
  if (training != nullptr) *training = nlohmann::json::parse(echo_training);
  const std::string echo = detail::read_string(is);
  if (config_echo != nullptr) *config_echo = echo;
  return net;
}

// Identify a model file by its magic without fully parsing it.
inline ModelKind sniff_model_kind(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  char magic[8];
  is.read(magic, 8);
  if (!is) throw DecodeError(path + ": too short to be a model container");
  if (std::memcmp(magic, kGmmMagic, 8) == 0) return ModelKind::kGmm;
  if (std::memcmp(magic, kNnMagic, 8) == 0) {
    detail::read_le<std::uint32_t>(is);  // version
    const std::string kind = detail::read_string(is);
    if (kind == "cnn") return ModelKind::kCnn;
    if (kind == "bilstm") return ModelKind::kRnn;
    throw DecodeError(path + ": unknown neural model kind '" + kind + "'");
  }
  throw DecodeError(path + ": not a droneguard model container");
}

// Element-wise parameter cast between precisions of the same architecture.
template <typename NetOut, typename NetIn>
void cast_params(NetOut& dst, NetIn& src) {
  auto po = dst.params();
  auto pi = src.params();
  if (po.size() != pi.size()) throw ShapeError("cast_params: parameter count mismatch");
  for (std::size_t i = 0; i < po.size(); ++i) {
    if (po[i]->shape != pi[i]->shape) throw ShapeError("cast_params: parameter shape mismatch");
    po[i]->data.assign(pi[i]->data.begin(), pi[i]->data.end());
  }
}

inline nn::CnnNet<float> to_float(nn::CnnNet<double>& net) {
  nn::CnnNet<float> out(net.arch);
  cast_params(out, net);
  return out;
}

inline nn::BiLstmNet<float> to_float(nn::BiLstmNet<double>& net) {
  nn::BiLstmNet<float> out(net.arch);
  cast_params(out, net);
  return out;
}

}  // namespace droneguard
