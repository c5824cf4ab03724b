#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

namespace spoiler::network {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

struct NetworkConfig {
  std::size_t vocab_size = 8000;
  std::size_t embed_dim = 32;
  std::size_t hidden_dim = 32;
  std::size_t n_lstm_layers = 2;
  double dropout_rate = 0.4;
  std::size_t max_len = 600;

  void validate() const;  // throws InvalidArgument
  bool operator==(const NetworkConfig&) const = default;
};

nlohmann::json to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const nlohmann::json& j);

// Gate blocks are stacked in the order input, forget, cell, output.
struct LstmLayer {
  Matrix W;  // [4H x in]
  Matrix U;  // [4H x H]
  Vector b;  // [4H]
};

struct ModelParams {
  NetworkConfig config;
  Matrix embedding;  // [vocab x embed]
  std::vector<LstmLayer> layers;
  Vector dense_w;  // [H]
  Vector dense_b;  // [1]

  // All-zero tensors with the shapes implied by config.
  static ModelParams zeros(const NetworkConfig& config);
};

// Gradients share the parameter layout.
using Gradients = ModelParams;

struct TensorView {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<double> data;
};

struct ConstTensorView {
  std::string name;
  std::vector<std::size_t> shape;
  std::span<const double> data;
};

// Fixed order: embedding, lstm<k>.W, lstm<k>.U, lstm<k>.b, dense.w, dense.b.
std::vector<TensorView> tensors(ModelParams& params);
std::vector<ConstTensorView> tensors(const ModelParams& params);

bool same_shapes(const ModelParams& a, const ModelParams& b);

// Embedding ~ U(-0.05, 0.05); W, U and the dense head ~ U(-r, r) with
// r = sqrt(6 / (fan_in + fan_out)). Biases are zero except the forget gate
// slice, which starts at 1.
ModelParams init_params(const NetworkConfig& config, std::uint64_t seed);

struct GateCache {
  Vector gates;  // activated i, f, g, o
  Vector c;
  Vector h;
};

// One LSTM step. h and c are the previous state.
GateCache lstm_cell(const LstmLayer& layer, const Vector& x, const Vector& h,
                    const Vector& c);

struct ForwardMode {
  bool train = false;
  std::uint64_t dropout_seed = 0;

  static ForwardMode eval() { return {}; }
  static ForwardMode training(std::uint64_t seed) { return {true, seed}; }
};

struct LayerTrace {
  Matrix gates;  // [T x 4H], activated
  Matrix c;      // [T x H]
  Matrix h;      // [T x H]
};

struct ForwardCache {
  std::vector<std::int32_t> ids;  // the true_len real tokens
  std::vector<LayerTrace> layers;
  Vector dropout_mask;  // already scaled by 1 / (1 - rate); ones in eval mode
  Vector head_input;    // last top-layer hidden state after dropout
  double logit = 0.0;
  std::size_t embed_dim = 0;
  std::size_t hidden_dim = 0;
};

struct ForwardResult {
  double logit = 0.0;
  ForwardCache cache;
};

// Runs the real tokens ids[0, true_len) through every layer; positions past
// true_len are never read. Throws InvalidArgument for true_len == 0 or
// out-of-range ids.
ForwardResult forward(const ModelParams& params, std::span<const std::int32_t> ids,
                      std::size_t true_len, ForwardMode mode);

// Inverted-dropout mask: each entry is 0 with probability rate, otherwise
// 1 / (1 - rate).
Vector dropout_mask(std::size_t size, double rate, std::uint64_t seed);

double sigmoid(double z);

// max(z, 0) - z*y + log(1 + exp(-|z|)). The target is normally 0 or 1;
// any value in [0, 1] is accepted.
double bce_with_logits(double logit, double target);
double bce_with_logits_grad(double logit, double target);

// Adds scale * dLoss/dParams into grads. Returns the loss. Throws
// InvalidArgument if the cache was produced by a model of another shape.
double accumulate_gradients(const ModelParams& params, const ForwardCache& cache,
                            double target, Gradients& grads, double scale = 1.0);

Gradients backward(const ModelParams& params, const ForwardCache& cache, double target);

struct AdamConfig {
  double lr = 0.003;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

struct AdamState {
  ModelParams m;
  ModelParams v;
  std::uint64_t t = 0;

  static AdamState fresh(const NetworkConfig& config);
};

// Bias-corrected Adam. Throws InvalidArgument naming the first tensor that
// holds a non-finite gradient; params and state are untouched in that case.
void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               const AdamConfig& config = {});

struct GradCheckOptions {
  double epsilon = 1e-5;
  bool negate_dense_gradient = false;  // mutation hook for testing the checker
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_tensor;
  std::size_t worst_index = 0;
  std::size_t n_checked = 0;
};

// Compares backward() against central differences for every parameter on one
// random full-length example. Relative error is |a - n| / max(|a|, |n|, 1e-12).
GradCheckResult grad_check(const NetworkConfig& config, std::uint64_t seed,
                           const GradCheckOptions& options = {});

}  // namespace spoiler::network
