#include "spoiler/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "spoiler/error.hpp"

namespace spoiler::metrics {

namespace {

struct ClassCounts {
  std::size_t pos = 0;
  std::size_t neg = 0;
};

ClassCounts count_classes(std::span<const double> scores,
                          std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw InvalidArgument("scores and labels differ in length");
  }
  ClassCounts c;
  for (int y : labels) (y == 1 ? c.pos : c.neg)++;
  return c;
}

ClassCounts require_both_classes(std::span<const double> scores,
                                 std::span<const int> labels) {
  const ClassCounts c = count_classes(scores, labels);
  if (c.pos == 0 || c.neg == 0) {
    throw DataError("AUC is undefined without both classes (" +
                    std::to_string(c.pos) + " positive, " +
                    std::to_string(c.neg) + " negative)");
  }
  return c;
}

std::vector<std::size_t> order_by_score(std::span<const double> scores) {
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return scores[a] < scores[b];
  });
  return order;
}

}  // namespace

double roc_auc(std::span<const double> scores, std::span<const int> labels) {
  const ClassCounts c = require_both_classes(scores, labels);
  const auto order = order_by_score(scores);

  // Sum of 1-based midranks over positives, accumulated per tie block.
  double rank_sum_pos = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    std::size_t pos_in_block = 0;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      if (labels[order[j]] == 1) ++pos_in_block;
      ++j;
    }
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum_pos += midrank * static_cast<double>(pos_in_block);
    i = j;
  }
  const auto p = static_cast<double>(c.pos);
  const auto n = static_cast<double>(c.neg);
  return (rank_sum_pos - p * (p + 1.0) / 2.0) / (p * n);
}

double auc_oracle(std::span<const double> scores, std::span<const int> labels) {
  const ClassCounts c = require_both_classes(scores, labels);
  double wins = 0.0;
  for (std::size_t a = 0; a < scores.size(); ++a) {
    if (labels[a] != 1) continue;
    for (std::size_t b = 0; b < scores.size(); ++b) {
      if (labels[b] == 1) continue;
      if (scores[a] > scores[b]) {
        wins += 1.0;
      } else if (scores[a] == scores[b]) {
        wins += 0.5;
      }
    }
  }
  return wins / (static_cast<double>(c.pos) * static_cast<double>(c.neg));
}

Confusion confusion(std::span<const double> scores, std::span<const int> labels,
                    double threshold) {
  count_classes(scores, labels);
  Confusion c;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    const bool predicted = scores[i] >= threshold;
    if (labels[i] == 1) {
      (predicted ? c.tp : c.fn)++;
    } else {
      (predicted ? c.fp : c.tn)++;
    }
  }
  return c;
}

std::vector<RocPoint> roc_curve(std::span<const double> scores,
                                std::span<const int> labels) {
  const ClassCounts c = require_both_classes(scores, labels);
  auto order = order_by_score(scores);
  std::reverse(order.begin(), order.end());

  std::vector<RocPoint> curve;
  curve.push_back({std::numeric_limits<double>::infinity(), 0.0, 0.0});
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    const double s = scores[order[i]];
    while (i < order.size() && scores[order[i]] == s) {
      (labels[order[i]] == 1 ? tp : fp)++;
      ++i;
    }
    curve.push_back({s, static_cast<double>(fp) / static_cast<double>(c.neg),
                     static_cast<double>(tp) / static_cast<double>(c.pos)});
  }
  return curve;
}

EvalReport make_report(std::span<const double> scores,
                       std::span<const int> labels, double threshold) {
  EvalReport r;
  r.auc = roc_auc(scores, labels);
  r.roc = roc_curve(scores, labels);
  const Confusion c = confusion(scores, labels, threshold);
  r.threshold = threshold;
  r.tp = c.tp;
  r.fp = c.fp;
  r.tn = c.tn;
  r.fn = c.fn;
  r.n_pos = c.tp + c.fn;
  r.n_neg = c.fp + c.tn;
  r.precision_defined = c.tp + c.fp > 0;
  r.recall_defined = r.n_pos > 0;
  if (r.precision_defined) {
    r.precision = static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fp);
  }
  if (r.recall_defined) {
    r.recall = static_cast<double>(c.tp) / static_cast<double>(r.n_pos);
  }
  return r;
}

EvalReport evaluate(const network::ModelParams& params, const textprep::Vocabulary& vocab,
                    const std::vector<corpus::SentenceExample>& examples,
                    double threshold) {
  std::vector<double> scores;
  std::vector<int> labels;
  scores.reserve(examples.size());
  labels.reserve(examples.size());
  for (const auto& ex : examples) {
    const auto ids = textprep::model_input(vocab, ex.title, ex.sentence);
    const double logit =
        network::forward(params, ids, ids.size(), network::ForwardMode::eval()).logit;
    scores.push_back(network::sigmoid(logit));
    labels.push_back(ex.label);
  }
  return make_report(scores, labels, threshold);
}

nlohmann::json to_json(const EvalReport& r, bool include_roc) {
  nlohmann::json j = {
      {"auc", r.auc},
      {"n_pos", r.n_pos},
      {"n_neg", r.n_neg},
      {"threshold", r.threshold},
      {"tp", r.tp},
      {"fp", r.fp},
      {"tn", r.tn},
      {"fn", r.fn},
      {"precision", r.precision},
      {"recall", r.recall},
      {"precision_defined", r.precision_defined},
      {"recall_defined", r.recall_defined},
  };
  if (include_roc) {
    auto& roc = j["roc"] = nlohmann::json::array();
    for (const RocPoint& p : r.roc) {
      // JSON has no infinity; the leading point is written with a null threshold.
      nlohmann::json t = std::isinf(p.threshold) ? nlohmann::json(nullptr)
                                                 : nlohmann::json(p.threshold);
      roc.push_back({{"threshold", t}, {"fpr", p.fpr}, {"tpr", p.tpr}});
    }
  }
  return j;
}

}  // namespace spoiler::metrics
