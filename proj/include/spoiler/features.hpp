#pragma once

#include <array>
#include <string>
#include <unordered_map>
#include <vector>

#include "json.hpp"
#include "spoiler/corpus.hpp"

namespace spoiler::features {

// Word specificity per book (item). A document is one review.
//   DF(w, i)  = reviews of book i containing w / reviews of book i
//   IIF(w)    = ln(n_items / books containing w)
//   DFIIF     = DF * IIF
class DfIifTable {
 public:
  std::size_t n_items() const { return item_doc_counts_.size(); }
  const std::unordered_map<std::string, std::size_t>& item_doc_counts() const {
    return item_doc_counts_;
  }

  // 0 when the pair was never seen.
  double df(const std::string& word, const std::string& item) const;
  double iif(const std::string& word) const;
  double dfiif(const std::string& word, const std::string& item) const;
  // Number of books whose reviews contain the word.
  std::size_t items_containing(const std::string& word) const;

  const std::unordered_map<std::string, std::unordered_map<std::string, double>>&
  df_entries() const {
    return df_;
  }

 private:
  friend DfIifTable build_df_iif(const std::vector<corpus::SentenceExample>&);

  std::unordered_map<std::string, std::size_t> item_doc_counts_;
  // item -> word -> DF
  std::unordered_map<std::string, std::unordered_map<std::string, double>> df_;
  std::unordered_map<std::string, double> iif_;
  std::unordered_map<std::string, std::size_t> items_containing_;
};

// Reviews are reassembled from sentence examples by review_id; the words of
// a document are the normalized tokens of all its sentences. Throws
// DataError when there are no examples.
DfIifTable build_df_iif(const std::vector<corpus::SentenceExample>& examples);

inline constexpr std::size_t kFeatureCount = 5;

struct FeatureVector {
  double max_dfiif = 0.0;
  double mean_dfiif = 0.0;
  double char_len = 0.0;     // code points / 100
  double token_count = 0.0;  // tokens / 10
  double title_overlap = 0.0;

  std::array<double, kFeatureCount> values() const {
    return {max_dfiif, mean_dfiif, char_len, token_count, title_overlap};
  }
};

const std::array<std::string, kFeatureCount>& feature_names();

FeatureVector featurize(const DfIifTable& table,
                        const corpus::SentenceExample& example);

struct BaselineModel {
  std::array<double, kFeatureCount> weights{};
  double bias = 0.0;

  nlohmann::json to_json() const;
  static BaselineModel from_json(const nlohmann::json& j);
};

struct BaselineFit {
  BaselineModel model;
  double final_loss = 0.0;
  std::vector<double> loss_history;  // mean loss before each step
};

// Logistic regression by full-batch gradient descent on mean binary
// cross-entropy with logits, starting from zero weights. Throws DataError if
// only one class is present.
BaselineFit train_baseline(const std::vector<FeatureVector>& features,
                           const std::vector<int>& labels, double lr,
                           std::size_t epochs);

double baseline_logit(const BaselineModel& model, const FeatureVector& x);
double predict_baseline(const BaselineModel& model, const FeatureVector& x);

}  // namespace spoiler::features
