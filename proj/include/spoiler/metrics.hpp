#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "json.hpp"
#include "spoiler/corpus.hpp"
#include "spoiler/network.hpp"
#include "spoiler/textprep.hpp"

namespace spoiler::metrics {

struct Confusion {
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
};

struct RocPoint {
  double threshold = 0.0;
  double fpr = 0.0;
  double tpr = 0.0;
};

struct EvalReport {
  double auc = 0.5;
  std::size_t n_pos = 0;
  std::size_t n_neg = 0;
  double threshold = 0.5;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t tn = 0;
  std::size_t fn = 0;
  double precision = 0.0;
  double recall = 0.0;
  bool precision_defined = false;  // false when nothing was predicted positive
  bool recall_defined = false;     // false when there are no positives
  std::vector<RocPoint> roc;
};

// Mann-Whitney AUC with midranks for tied scores, O(n log n). Throws
// DataError unless both classes are present.
double roc_auc(std::span<const double> scores, std::span<const int> labels);

// Pairwise definition, O(P*N). Test oracle for roc_auc.
double auc_oracle(std::span<const double> scores, std::span<const int> labels);

// Predicted positive iff score >= threshold.
Confusion confusion(std::span<const double> scores, std::span<const int> labels,
                    double threshold = 0.5);

// One point per distinct score, from (0,0) to (1,1).
std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const int> labels);

EvalReport make_report(std::span<const double> scores,
                       std::span<const int> labels, double threshold = 0.5);

// Scores every example with the model in eval mode and builds the report.
EvalReport evaluate(const network::ModelParams& params, const textprep::Vocabulary& vocab,
                    const std::vector<corpus::SentenceExample>& examples,
                    double threshold = 0.5);

nlohmann::json to_json(const EvalReport& report, bool include_roc = true);

}  // namespace spoiler::metrics
