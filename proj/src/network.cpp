#include "spoiler/network.hpp"

#include <algorithm>
#include <cmath>
#include <utility>

#include "spoiler/error.hpp"
#include "spoiler/random.hpp"

namespace spoiler::network {

namespace {

using Eigen::Index;

Index idx(std::size_t n) { return static_cast<Index>(n); }

template <typename Params, typename View>
std::vector<View> collect_tensors(Params& p) {
  std::vector<View> out;
  auto add = [&out](std::string name, auto& t, std::vector<std::size_t> shape) {
    out.push_back({std::move(name), std::move(shape),
                   {t.data(), static_cast<std::size_t>(t.size())}});
  };
  add("embedding", p.embedding,
      {static_cast<std::size_t>(p.embedding.rows()),
       static_cast<std::size_t>(p.embedding.cols())});
  for (std::size_t k = 0; k < p.layers.size(); ++k) {
    auto& layer = p.layers[k];
    const std::string prefix = "lstm" + std::to_string(k) + ".";
    add(prefix + "W", layer.W,
        {static_cast<std::size_t>(layer.W.rows()),
         static_cast<std::size_t>(layer.W.cols())});
    add(prefix + "U", layer.U,
        {static_cast<std::size_t>(layer.U.rows()),
         static_cast<std::size_t>(layer.U.cols())});
    add(prefix + "b", layer.b, {static_cast<std::size_t>(layer.b.size())});
  }
  add("dense.w", p.dense_w, {static_cast<std::size_t>(p.dense_w.size())});
  add("dense.b", p.dense_b, {static_cast<std::size_t>(p.dense_b.size())});
  return out;
}

void fill_uniform(std::span<double> data, double bound, Rng& rng) {
  for (double& x : data) x = rng.uniform(-bound, bound);
}

double glorot_bound(std::size_t fan_in, std::size_t fan_out) {
  return std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
}

void activate_gates(Eigen::Ref<Vector> z, Index hidden) {
  auto sig = [](double v) { return sigmoid(v); };
  z.segment(0, 2 * hidden) = z.segment(0, 2 * hidden).unaryExpr(sig);
  z.segment(2 * hidden, hidden) = z.segment(2 * hidden, hidden).array().tanh();
  z.segment(3 * hidden, hidden) = z.segment(3 * hidden, hidden).unaryExpr(sig);
}

void check_cache(const ModelParams& params, const ForwardCache& cache) {
  const auto& cfg = params.config;
  const bool ok = cache.embed_dim == cfg.embed_dim &&
                  cache.hidden_dim == cfg.hidden_dim &&
                  cache.layers.size() == params.layers.size() &&
                  !cache.ids.empty() &&
                  cache.dropout_mask.size() == idx(cfg.hidden_dim) &&
                  std::all_of(cache.layers.begin(), cache.layers.end(),
                              [&](const LayerTrace& t) {
                                return t.h.rows() == idx(cache.ids.size()) &&
                                       t.h.cols() == idx(cfg.hidden_dim);
                              });
  if (!ok) throw InvalidArgument("forward cache does not match the model");
}

}  // namespace

void NetworkConfig::validate() const {
  if (vocab_size == 0 || embed_dim == 0 || hidden_dim == 0 ||
      n_lstm_layers == 0 || max_len == 0) {
    throw InvalidArgument("network dimensions must be positive");
  }
  if (!(dropout_rate >= 0.0 && dropout_rate < 1.0)) {
    throw InvalidArgument("dropout_rate must lie in [0, 1)");
  }
}

nlohmann::json to_json(const NetworkConfig& c) {
  return {{"vocab_size", c.vocab_size},       {"embed_dim", c.embed_dim},
          {"hidden_dim", c.hidden_dim},       {"n_lstm_layers", c.n_lstm_layers},
          {"dropout_rate", c.dropout_rate},   {"max_len", c.max_len}};
}

NetworkConfig network_config_from_json(const nlohmann::json& j) {
  NetworkConfig c;
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.embed_dim = j.value("embed_dim", c.embed_dim);
  c.hidden_dim = j.value("hidden_dim", c.hidden_dim);
  c.n_lstm_layers = j.value("n_lstm_layers", c.n_lstm_layers);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  c.max_len = j.value("max_len", c.max_len);
  c.validate();
  return c;
}

ModelParams ModelParams::zeros(const NetworkConfig& config) {
  config.validate();
  const Index h = idx(config.hidden_dim);
  ModelParams p;
  p.config = config;
  p.embedding = Matrix::Zero(idx(config.vocab_size), idx(config.embed_dim));
  for (std::size_t k = 0; k < config.n_lstm_layers; ++k) {
    const Index in = k == 0 ? idx(config.embed_dim) : h;
    p.layers.push_back({Matrix::Zero(4 * h, in), Matrix::Zero(4 * h, h),
                        Vector::Zero(4 * h)});
  }
  p.dense_w = Vector::Zero(h);
  p.dense_b = Vector::Zero(1);
  return p;
}

std::vector<TensorView> tensors(ModelParams& params) {
  return collect_tensors<ModelParams, TensorView>(params);
}

std::vector<ConstTensorView> tensors(const ModelParams& params) {
  return collect_tensors<const ModelParams, ConstTensorView>(params);
}

bool same_shapes(const ModelParams& a, const ModelParams& b) {
  const auto ta = tensors(a);
  const auto tb = tensors(b);
  if (ta.size() != tb.size()) return false;
  for (std::size_t i = 0; i < ta.size(); ++i) {
    if (ta[i].name != tb[i].name || ta[i].shape != tb[i].shape) return false;
  }
  return true;
}

ModelParams init_params(const NetworkConfig& config, std::uint64_t seed) {
  ModelParams p = ModelParams::zeros(config);
  Rng rng(seed);
  const std::size_t h = config.hidden_dim;
  fill_uniform({p.embedding.data(), static_cast<std::size_t>(p.embedding.size())},
               0.05, rng);
  for (LstmLayer& layer : p.layers) {
    const auto in = static_cast<std::size_t>(layer.W.cols());
    fill_uniform({layer.W.data(), static_cast<std::size_t>(layer.W.size())},
                 glorot_bound(in, 4 * h), rng);
    fill_uniform({layer.U.data(), static_cast<std::size_t>(layer.U.size())},
                 glorot_bound(h, 4 * h), rng);
    layer.b.segment(idx(h), idx(h)).setOnes();
  }
  fill_uniform({p.dense_w.data(), h}, glorot_bound(h, 1), rng);
  return p;
}

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double bce_with_logits(double logit, double target) {
  return std::max(logit, 0.0) - logit * target + std::log1p(std::exp(-std::abs(logit)));
}

double bce_with_logits_grad(double logit, double target) {
  return sigmoid(logit) - target;
}

GateCache lstm_cell(const LstmLayer& layer, const Vector& x, const Vector& h,
                    const Vector& c) {
  const Index hidden = layer.U.cols();
  GateCache out;
  out.gates = layer.W * x + layer.U * h + layer.b;
  activate_gates(out.gates, hidden);
  const auto i = out.gates.segment(0, hidden).array();
  const auto f = out.gates.segment(hidden, hidden).array();
  const auto g = out.gates.segment(2 * hidden, hidden).array();
  const auto o = out.gates.segment(3 * hidden, hidden).array();
  out.c = (f * c.array() + i * g).matrix();
  out.h = (o * out.c.array().tanh()).matrix();
  return out;
}

Vector dropout_mask(std::size_t size, double rate, std::uint64_t seed) {
  Vector mask = Vector::Ones(idx(size));
  if (rate <= 0.0) return mask;
  Rng rng(seed);
  const double keep_scale = 1.0 / (1.0 - rate);
  for (Index k = 0; k < mask.size(); ++k) {
    mask[k] = rng.uniform() < rate ? 0.0 : keep_scale;
  }
  return mask;
}

ForwardResult forward(const ModelParams& params, std::span<const std::int32_t> ids,
                      std::size_t true_len, ForwardMode mode) {
  const NetworkConfig& cfg = params.config;
  if (true_len == 0) throw InvalidArgument("forward needs at least one real token");
  if (true_len > ids.size()) throw InvalidArgument("true_len exceeds sequence length");

  const Index steps = idx(true_len);
  const Index hidden = idx(cfg.hidden_dim);

  ForwardResult result;
  ForwardCache& cache = result.cache;
  cache.ids.assign(ids.begin(), ids.begin() + static_cast<long>(true_len));
  cache.embed_dim = cfg.embed_dim;
  cache.hidden_dim = cfg.hidden_dim;

  Matrix input(steps, idx(cfg.embed_dim));
  for (Index t = 0; t < steps; ++t) {
    const std::int32_t id = cache.ids[static_cast<std::size_t>(t)];
    if (id < 0 || static_cast<std::size_t>(id) >= cfg.vocab_size) {
      throw InvalidArgument("token id " + std::to_string(id) + " out of range");
    }
    input.row(t) = params.embedding.row(id);
  }

  cache.layers.reserve(params.layers.size());
  for (const LstmLayer& layer : params.layers) {
    LayerTrace trace;
    // Input projections for every step at once; the recurrent term is added
    // step by step.
    trace.gates = input * layer.W.transpose();
    trace.gates.rowwise() += layer.b.transpose();
    trace.c.resize(steps, hidden);
    trace.h.resize(steps, hidden);

    Vector h_prev = Vector::Zero(hidden);
    Vector c_prev = Vector::Zero(hidden);
    for (Index t = 0; t < steps; ++t) {
      Vector z = trace.gates.row(t).transpose() + layer.U * h_prev;
      activate_gates(z, hidden);
      const auto i = z.segment(0, hidden).array();
      const auto f = z.segment(hidden, hidden).array();
      const auto g = z.segment(2 * hidden, hidden).array();
      const auto o = z.segment(3 * hidden, hidden).array();
      c_prev = (f * c_prev.array() + i * g).matrix();
      h_prev = (o * c_prev.array().tanh()).matrix();
      trace.gates.row(t) = z.transpose();
      trace.c.row(t) = c_prev.transpose();
      trace.h.row(t) = h_prev.transpose();
    }
    input = trace.h;
    cache.layers.push_back(std::move(trace));
  }

  cache.dropout_mask = mode.train
                           ? dropout_mask(cfg.hidden_dim, cfg.dropout_rate,
                                          mode.dropout_seed)
                           : Vector::Ones(hidden);
  cache.head_input =
      cache.layers.back().h.row(steps - 1).transpose().cwiseProduct(cache.dropout_mask);
  cache.logit = params.dense_w.dot(cache.head_input) + params.dense_b[0];
  result.logit = cache.logit;
  return result;
}

double accumulate_gradients(const ModelParams& params, const ForwardCache& cache,
                            double target, Gradients& grads, double scale) {
  check_cache(params, cache);
  if (!same_shapes(params, grads)) {
    throw InvalidArgument("gradient buffer does not match the model");
  }
  const Index steps = idx(cache.ids.size());
  const Index hidden = idx(cache.hidden_dim);

  const double dlogit = bce_with_logits_grad(cache.logit, target);
  grads.dense_w += (scale * dlogit) * cache.head_input;
  grads.dense_b[0] += scale * dlogit;

  // dL/dh for every step of the current layer, coming from above.
  Matrix dh_above = Matrix::Zero(steps, hidden);
  dh_above.row(steps - 1) =
      (dlogit * params.dense_w.cwiseProduct(cache.dropout_mask)).transpose();

  for (std::size_t k = params.layers.size(); k-- > 0;) {
    const LstmLayer& layer = params.layers[k];
    const LayerTrace& trace = cache.layers[k];
    LstmLayer& grad = grads.layers[k];

    Matrix dz(steps, 4 * hidden);
    Vector dh_next = Vector::Zero(hidden);
    Vector dc_next = Vector::Zero(hidden);
    for (Index t = steps - 1; t >= 0; --t) {
      const auto gates = trace.gates.row(t).transpose().array();
      const auto i = gates.segment(0, hidden);
      const auto f = gates.segment(hidden, hidden);
      const auto g = gates.segment(2 * hidden, hidden);
      const auto o = gates.segment(3 * hidden, hidden);
      const Eigen::ArrayXd c = trace.c.row(t).transpose().array();
      const Eigen::ArrayXd tanh_c = c.tanh();
      const Eigen::ArrayXd c_prev =
          t > 0 ? Eigen::ArrayXd(trace.c.row(t - 1).transpose().array())
                : Eigen::ArrayXd::Zero(hidden);

      const Eigen::ArrayXd dh = dh_above.row(t).transpose().array() + dh_next.array();
      const Eigen::ArrayXd dc = dh * o * (1.0 - tanh_c.square()) + dc_next.array();

      auto row = dz.row(t);
      row.segment(0, hidden) = (dc * g * i * (1.0 - i)).transpose();
      row.segment(hidden, hidden) = (dc * c_prev * f * (1.0 - f)).transpose();
      row.segment(2 * hidden, hidden) = (dc * i * (1.0 - g.square())).transpose();
      row.segment(3 * hidden, hidden) = (dh * tanh_c * o * (1.0 - o)).transpose();

      dh_next = layer.U.transpose() * row.transpose();
      dc_next = (dc * f).matrix();
    }

    if (k > 0) {
      grad.W.noalias() += scale * dz.transpose() * cache.layers[k - 1].h;
    } else {
      Matrix emb(steps, idx(cache.embed_dim));
      for (Index t = 0; t < steps; ++t) {
        emb.row(t) = params.embedding.row(cache.ids[static_cast<std::size_t>(t)]);
      }
      grad.W.noalias() += scale * dz.transpose() * emb;
    }
    if (steps > 1) {
      grad.U.noalias() +=
          scale * dz.bottomRows(steps - 1).transpose() * trace.h.topRows(steps - 1);
    }
    grad.b += scale * dz.colwise().sum().transpose();

    Matrix dinput = dz * layer.W;  // [T x in]
    if (k > 0) {
      dh_above = std::move(dinput);
    } else {
      for (Index t = 0; t < steps; ++t) {
        grads.embedding.row(cache.ids[static_cast<std::size_t>(t)]) +=
            scale * dinput.row(t);
      }
    }
  }
  return bce_with_logits(cache.logit, target);
}

Gradients backward(const ModelParams& params, const ForwardCache& cache, double target) {
  Gradients grads = ModelParams::zeros(params.config);
  accumulate_gradients(params, cache, target, grads);
  return grads;
}

AdamState AdamState::fresh(const NetworkConfig& config) {
  return {ModelParams::zeros(config), ModelParams::zeros(config), 0};
}

void adam_step(ModelParams& params, const Gradients& grads, AdamState& state,
               const AdamConfig& config) {
  if (!same_shapes(params, grads) || !same_shapes(params, state.m) ||
      !same_shapes(params, state.v)) {
    throw InvalidArgument("adam_step: tensor shapes disagree");
  }
  const auto g = tensors(grads);
  for (const ConstTensorView& view : g) {
    for (double x : view.data) {
      if (!std::isfinite(x)) {
        throw InvalidArgument("non-finite gradient in tensor '" + view.name + "'");
      }
    }
  }

  state.t += 1;
  const auto t = static_cast<double>(state.t);
  const double correction1 = 1.0 - std::pow(config.beta1, t);
  const double correction2 = 1.0 - std::pow(config.beta2, t);

  auto p = tensors(params);
  auto m = tensors(state.m);
  auto v = tensors(state.v);
  for (std::size_t k = 0; k < p.size(); ++k) {
    for (std::size_t i = 0; i < p[k].data.size(); ++i) {
      const double gi = g[k].data[i];
      double& mi = m[k].data[i];
      double& vi = v[k].data[i];
      mi = config.beta1 * mi + (1.0 - config.beta1) * gi;
      vi = config.beta2 * vi + (1.0 - config.beta2) * gi * gi;
      const double m_hat = mi / correction1;
      const double v_hat = vi / correction2;
      p[k].data[i] -= config.lr * m_hat / (std::sqrt(v_hat) + config.epsilon);
    }
  }
}

GradCheckResult grad_check(const NetworkConfig& config, std::uint64_t seed,
                           const GradCheckOptions& options) {
  ModelParams params = init_params(config, seed);
  Rng rng(mix_seed(seed, 0x6772616463686bULL));
  // Nonzero biases so every gate path carries gradient.
  for (LstmLayer& layer : params.layers) {
    for (Index k = 0; k < layer.b.size(); ++k) layer.b[k] += rng.uniform(-0.5, 0.5);
  }
  params.dense_b[0] = rng.uniform(-0.5, 0.5);

  std::vector<std::int32_t> ids(config.max_len);
  for (auto& id : ids) id = static_cast<std::int32_t>(rng.below(config.vocab_size));
  const int label = static_cast<int>(rng.below(2));
  const ForwardMode mode = ForwardMode::training(mix_seed(seed, 17));

  auto loss_at = [&](const ModelParams& p) {
    return bce_with_logits(forward(p, ids, ids.size(), mode).logit, label);
  };

  Gradients analytic = backward(params, forward(params, ids, ids.size(), mode).cache, label);
  if (options.negate_dense_gradient) {
    analytic.dense_w = -analytic.dense_w;
    analytic.dense_b = -analytic.dense_b;
  }

  GradCheckResult result;
  auto param_views = tensors(params);
  const auto grad_views = tensors(std::as_const(analytic));
  for (std::size_t k = 0; k < param_views.size(); ++k) {
    for (std::size_t i = 0; i < param_views[k].data.size(); ++i) {
      double& x = param_views[k].data[i];
      const double saved = x;
      x = saved + options.epsilon;
      const double plus = loss_at(params);
      x = saved - options.epsilon;
      const double minus = loss_at(params);
      x = saved;

      const double numeric = (plus - minus) / (2.0 * options.epsilon);
      const double a = grad_views[k].data[i];
      const double rel = std::abs(a - numeric) /
                         std::max({std::abs(a), std::abs(numeric), 1e-12});
      ++result.n_checked;
      if (rel > result.max_relative_error) {
        result.max_relative_error = rel;
        result.worst_tensor = param_views[k].name;
        result.worst_index = i;
      }
    }
  }
  return result;
}

}  // namespace spoiler::network
