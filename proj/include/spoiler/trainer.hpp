#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "spoiler/corpus.hpp"
#include "spoiler/network.hpp"
#include "spoiler/textprep.hpp"

namespace spoiler::trainer {

struct TrainConfig {
  std::size_t batch_size = 256;
  std::size_t epochs = 5;
  double lr = 0.003;
  std::uint64_t seed = 0;
  network::NetworkConfig network;
  textprep::EncoderConfig encoder;

  // Throws InvalidArgument. The network's vocab_size and max_len must match
  // the encoder's.
  void validate() const;
};

nlohmann::json to_json(const TrainConfig& config);
// Missing keys keep their defaults; a network block without vocab_size or
// max_len inherits them from the encoder block.
TrainConfig train_config_from_json(const nlohmann::json& j);

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;      // mean training loss over the epoch
  double val_auc = 0.0;
  double secs = 0.0;
};

struct TrainLog {
  std::vector<EpochLog> epochs;
  std::uint64_t seed = 0;
  std::size_t n_train = 0;
  std::size_t n_validation = 0;
  std::size_t best_epoch = 0;
  double best_val_auc = 0.0;
};

// JSON line for one epoch; secs is left out when deterministic is set.
nlohmann::json to_json(const EpochLog& entry, bool deterministic = false);

struct EncodedExample {
  std::vector<std::int32_t> ids;  // real tokens only
  int label = 0;
};

std::vector<EncodedExample> encode_examples(const textprep::Vocabulary& vocab,
                                            const std::vector<corpus::SentenceExample>& examples);

// Seeded shuffle of [0, n) cut into contiguous batches; the last may be short.
std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch_size,
                                                   std::uint64_t epoch_seed);

// Probability of the positive class for each example, eval mode.
std::vector<double> score(const network::ModelParams& params,
                          const std::vector<EncodedExample>& examples);

struct Checkpoint {
  network::ModelParams params;
  std::optional<network::AdamState> adam;
  std::uint64_t step = 0;
  nlohmann::json trainer_state;  // null unless written by Trainer
};

nlohmann::json checkpoint_to_json(const network::ModelParams& params,
                                  const network::AdamState* adam);
Checkpoint checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const network::ModelParams& params, const network::AdamState* adam,
                     const std::string& path);
// Throws DataError on version or shape mismatch.
Checkpoint load_checkpoint(const std::string& path);

// Epoch-at-a-time training with best-validation-AUC model selection.
class Trainer {
 public:
  // Throws DataError if the training set is empty or validation lacks a class.
  Trainer(TrainConfig config, std::vector<EncodedExample> train,
          std::vector<EncodedExample> validation);

  bool finished() const { return epoch_ >= config_.epochs; }
  std::size_t completed_epochs() const { return epoch_; }

  EpochLog run_epoch();
  // Runs the remaining epochs.
  void run();

  const network::ModelParams& params() const { return params_; }
  const network::ModelParams& best_params() const { return best_params_; }
  const network::AdamState& adam_state() const { return adam_; }
  const TrainLog& log() const { return log_; }

  // Full state, including best params and the log, for exact resumption.
  void save_state(const std::string& path) const;
  void restore_state(const std::string& path);

 private:
  TrainConfig config_;
  std::vector<EncodedExample> train_;
  std::vector<EncodedExample> validation_;
  std::vector<int> validation_labels_;
  network::ModelParams params_;
  network::ModelParams best_params_;
  network::AdamState adam_;
  network::Gradients grads_;
  TrainLog log_;
  std::size_t epoch_ = 0;
};

struct TrainResult {
  network::ModelParams params;  // best validation AUC
  TrainLog log;
};

TrainResult train(const TrainConfig& config, const corpus::DatasetSplit& split,
                  const textprep::Vocabulary& vocab);

// sigmoid of the eval-mode logit. Text without tokens is scored as a single
// OOV token.
double predict(const network::ModelParams& params, const textprep::Vocabulary& vocab,
               std::string_view title, std::string_view sentence);

}  // namespace spoiler::trainer
