#include "spoiler/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <numeric>

#include "spoiler/error.hpp"
#include "spoiler/metrics.hpp"
#include "spoiler/random.hpp"

namespace spoiler::trainer {

namespace {

using nlohmann::json;
using network::ModelParams;

json tensors_to_json(const ModelParams& p) {
  json out = json::object();
  for (const auto& view : network::tensors(p)) {
    out[view.name] = {{"shape", view.shape},
                      {"data", std::vector<double>(view.data.begin(), view.data.end())}};
  }
  return out;
}

void tensors_from_json(const json& j, ModelParams& p) {
  for (auto& view : network::tensors(p)) {
    auto it = j.find(view.name);
    if (it == j.end()) throw DataError("checkpoint lacks tensor '" + view.name + "'");
    const auto shape = it->at("shape").get<std::vector<std::size_t>>();
    const auto& data = it->at("data");
    if (shape != view.shape || data.size() != view.data.size()) {
      throw DataError("checkpoint tensor '" + view.name + "' has the wrong shape");
    }
    for (std::size_t i = 0; i < view.data.size(); ++i) {
      view.data[i] = data[i].get<double>();
    }
  }
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
}

void write_json_file(const json& j, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << j.dump() << '\n';
  if (!out) throw DataError("write failed for " + path);
}

std::vector<int> labels_of(const std::vector<EncodedExample>& examples) {
  std::vector<int> labels;
  labels.reserve(examples.size());
  for (const auto& ex : examples) labels.push_back(ex.label);
  return labels;
}

json epoch_to_state(const EpochLog& e) {
  return {{"epoch", e.epoch}, {"loss", e.loss}, {"val_auc", e.val_auc}, {"secs", e.secs}};
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size < 1) throw InvalidArgument("batch_size must be at least 1");
  if (epochs < 1) throw InvalidArgument("epochs must be at least 1");
  if (!(lr > 0.0)) throw InvalidArgument("lr must be positive");
  network.validate();
  encoder.validate();
  if (network.vocab_size != encoder.vocab_size || network.max_len != encoder.max_len) {
    throw InvalidArgument("network and encoder disagree on vocab_size or max_len");
  }
}

json to_json(const TrainConfig& c) {
  return {{"batch_size", c.batch_size},
          {"epochs", c.epochs},
          {"lr", c.lr},
          {"seed", c.seed},
          {"network", network::to_json(c.network)},
          {"encoder", {{"vocab_size", c.encoder.vocab_size}, {"max_len", c.encoder.max_len}}}};
}

TrainConfig train_config_from_json(const json& j) {
  try {
    TrainConfig c;
    c.batch_size = j.value("batch_size", c.batch_size);
    c.epochs = j.value("epochs", c.epochs);
    c.lr = j.value("lr", c.lr);
    c.seed = j.value("seed", c.seed);
    if (auto enc = j.find("encoder"); enc != j.end()) {
      c.encoder.vocab_size = enc->value("vocab_size", c.encoder.vocab_size);
      c.encoder.max_len = enc->value("max_len", c.encoder.max_len);
    }
    json net = j.value("network", json::object());
    if (!net.contains("vocab_size")) net["vocab_size"] = c.encoder.vocab_size;
    if (!net.contains("max_len")) net["max_len"] = c.encoder.max_len;
    c.network = network::network_config_from_json(net);
    c.validate();
    return c;
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("malformed train config: ") + e.what());
  }
}

json to_json(const EpochLog& e, bool deterministic) {
  json j = {{"epoch", e.epoch}, {"loss", e.loss}, {"val_auc", e.val_auc}};
  if (!deterministic) j["secs"] = e.secs;
  return j;
}

std::vector<EncodedExample> encode_examples(
    const textprep::Vocabulary& vocab, const std::vector<corpus::SentenceExample>& examples) {
  std::vector<EncodedExample> out;
  out.reserve(examples.size());
  for (const auto& ex : examples) {
    out.push_back({textprep::model_input(vocab, ex.title, ex.sentence), ex.label});
  }
  return out;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t epoch_seed) {
  if (batch_size == 0) throw InvalidArgument("batch_size must be at least 1");
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(epoch_seed);
  rng.shuffle(std::span(order));

  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t start = 0; start < n; start += batch_size) {
    const std::size_t end = std::min(n, start + batch_size);
    batches.emplace_back(order.begin() + static_cast<long>(start),
                         order.begin() + static_cast<long>(end));
  }
  return batches;
}

std::vector<double> score(const ModelParams& params,
                          const std::vector<EncodedExample>& examples) {
  std::vector<double> scores;
  scores.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto result =
        network::forward(params, ex.ids, ex.ids.size(), network::ForwardMode::eval());
    scores.push_back(network::sigmoid(result.logit));
  }
  return scores;
}

json checkpoint_to_json(const ModelParams& params, const network::AdamState* adam) {
  json j = {{"version", 1},
            {"config", network::to_json(params.config)},
            {"tensors", tensors_to_json(params)},
            {"step", adam ? adam->t : 0}};
  if (adam) j["adam"] = {{"m", tensors_to_json(adam->m)}, {"v", tensors_to_json(adam->v)}};
  return j;
}

Checkpoint checkpoint_from_json(const json& j) {
  try {
    const int version = j.at("version").get<int>();
    if (version != 1) {
      throw DataError("unsupported checkpoint version " + std::to_string(version));
    }
    const auto config = network::network_config_from_json(j.at("config"));
    Checkpoint ck;
    ck.params = ModelParams::zeros(config);
    tensors_from_json(j.at("tensors"), ck.params);
    ck.step = j.value("step", std::uint64_t{0});
    if (auto adam = j.find("adam"); adam != j.end() && !adam->is_null()) {
      auto state = network::AdamState::fresh(config);
      tensors_from_json(adam->at("m"), state.m);
      tensors_from_json(adam->at("v"), state.v);
      state.t = ck.step;
      ck.adam = std::move(state);
    }
    if (auto t = j.find("trainer"); t != j.end()) ck.trainer_state = *t;
    return ck;
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const ModelParams& params, const network::AdamState* adam,
                     const std::string& path) {
  write_json_file(checkpoint_to_json(params, adam), path);
}

Checkpoint load_checkpoint(const std::string& path) {
  return checkpoint_from_json(read_json_file(path));
}

Trainer::Trainer(TrainConfig config, std::vector<EncodedExample> train,
                 std::vector<EncodedExample> validation)
    : config_(std::move(config)),
      train_(std::move(train)),
      validation_(std::move(validation)),
      validation_labels_(labels_of(validation_)) {
  config_.validate();
  if (train_.empty()) throw DataError("training set is empty");
  const auto pos = std::count(validation_labels_.begin(), validation_labels_.end(), 1);
  if (pos == 0 || pos == static_cast<long>(validation_labels_.size())) {
    throw DataError("validation set must contain both classes");
  }
  params_ = network::init_params(config_.network, config_.seed);
  best_params_ = params_;
  adam_ = network::AdamState::fresh(config_.network);
  grads_ = ModelParams::zeros(config_.network);
  log_.seed = config_.seed;
  log_.n_train = train_.size();
  log_.n_validation = validation_.size();
}

EpochLog Trainer::run_epoch() {
  const auto start = std::chrono::steady_clock::now();
  const std::uint64_t epoch_seed = config_.seed + epoch_;
  const network::AdamConfig adam_config{.lr = config_.lr};

  double loss_sum = 0.0;
  std::size_t position = 0;
  for (const auto& batch : make_batches(train_.size(), config_.batch_size, epoch_seed)) {
    for (const auto& view : network::tensors(grads_)) {
      std::fill(view.data.begin(), view.data.end(), 0.0);
    }
    const double scale = 1.0 / static_cast<double>(batch.size());
    for (std::size_t index : batch) {
      const EncodedExample& ex = train_[index];
      const auto mode = network::ForwardMode::training(
          mix_seed(mix_seed(config_.seed, epoch_), position++));
      const auto result = network::forward(params_, ex.ids, ex.ids.size(), mode);
      loss_sum += network::accumulate_gradients(params_, result.cache, ex.label, grads_, scale);
    }
    network::adam_step(params_, grads_, adam_, adam_config);
  }

  EpochLog entry;
  entry.epoch = ++epoch_;
  entry.loss = loss_sum / static_cast<double>(train_.size());
  entry.val_auc = metrics::roc_auc(score(params_, validation_), validation_labels_);
  entry.secs =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

  if (log_.epochs.empty() || entry.val_auc > log_.best_val_auc) {
    log_.best_val_auc = entry.val_auc;
    log_.best_epoch = entry.epoch;
    best_params_ = params_;
  }
  log_.epochs.push_back(entry);
  return entry;
}

void Trainer::run() {
  while (!finished()) run_epoch();
}

void Trainer::save_state(const std::string& path) const {
  json j = checkpoint_to_json(params_, &adam_);
  json entries = json::array();
  for (const auto& e : log_.epochs) entries.push_back(epoch_to_state(e));
  j["trainer"] = {{"epoch", epoch_},
                  {"best_epoch", log_.best_epoch},
                  {"best_val_auc", log_.best_val_auc},
                  {"log", entries},
                  {"best_tensors", tensors_to_json(best_params_)}};
  write_json_file(j, path);
}

void Trainer::restore_state(const std::string& path) {
  Checkpoint ck = load_checkpoint(path);
  if (!(ck.params.config == config_.network)) {
    throw DataError("checkpoint network config differs from the trainer's");
  }
  if (!ck.adam || ck.trainer_state.is_null()) {
    throw DataError(path + " is a model checkpoint, not a trainer state");
  }
  try {
    const json& t = ck.trainer_state;
    ModelParams best = ModelParams::zeros(config_.network);
    tensors_from_json(t.at("best_tensors"), best);
    TrainLog log = log_;
    log.epochs.clear();
    for (const auto& e : t.at("log")) {
      log.epochs.push_back({e.at("epoch").get<std::size_t>(), e.at("loss").get<double>(),
                            e.at("val_auc").get<double>(), e.at("secs").get<double>()});
    }
    log.best_epoch = t.at("best_epoch").get<std::size_t>();
    log.best_val_auc = t.at("best_val_auc").get<double>();
    epoch_ = t.at("epoch").get<std::size_t>();
    log_ = std::move(log);
    best_params_ = std::move(best);
  } catch (const json::exception& e) {
    throw DataError(std::string("malformed trainer state: ") + e.what());
  }
  params_ = std::move(ck.params);
  adam_ = std::move(*ck.adam);
}

TrainResult train(const TrainConfig& config, const corpus::DatasetSplit& split,
                  const textprep::Vocabulary& vocab) {
  Trainer trainer(config, encode_examples(vocab, split.train),
                  encode_examples(vocab, split.validation));
  trainer.run();
  return {trainer.best_params(), trainer.log()};
}

double predict(const ModelParams& params, const textprep::Vocabulary& vocab,
               std::string_view title, std::string_view sentence) {
  const auto ids = textprep::model_input(vocab, title, sentence);
  return network::sigmoid(
      network::forward(params, ids, ids.size(), network::ForwardMode::eval()).logit);
}

}  // namespace spoiler::trainer
