#include "spoiler/features.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_set>

#include "spoiler/error.hpp"
#include "spoiler/network.hpp"
#include "spoiler/textprep.hpp"

namespace spoiler::features {

double DfIifTable::df(const std::string& word, const std::string& item) const {
  auto book = df_.find(item);
  if (book == df_.end()) return 0.0;
  auto it = book->second.find(word);
  return it == book->second.end() ? 0.0 : it->second;
}

double DfIifTable::iif(const std::string& word) const {
  auto it = iif_.find(word);
  return it == iif_.end() ? 0.0 : it->second;
}

double DfIifTable::dfiif(const std::string& word, const std::string& item) const {
  return df(word, item) * iif(word);
}

std::size_t DfIifTable::items_containing(const std::string& word) const {
  auto it = items_containing_.find(word);
  return it == items_containing_.end() ? 0 : it->second;
}

DfIifTable build_df_iif(const std::vector<corpus::SentenceExample>& examples) {
  if (examples.empty()) throw DataError("DF-IIF needs at least one book");

  struct Document {
    std::string item;
    std::unordered_set<std::string> words;
  };
  std::vector<Document> docs;
  std::unordered_map<std::string, std::size_t> doc_index;
  for (const auto& ex : examples) {
    auto [it, inserted] = doc_index.try_emplace(ex.review_id, docs.size());
    if (inserted) docs.push_back({ex.book_id, {}});
    for (auto& token : textprep::normalize(ex.sentence)) {
      docs[it->second].words.insert(std::move(token));
    }
  }

  DfIifTable table;
  // item -> word -> number of documents containing it
  std::unordered_map<std::string, std::unordered_map<std::string, std::size_t>> counts;
  for (const Document& doc : docs) {
    ++table.item_doc_counts_[doc.item];
    auto& item_counts = counts[doc.item];
    for (const std::string& w : doc.words) ++item_counts[w];
  }

  for (const auto& [item, words] : counts) {
    const auto n_docs = static_cast<double>(table.item_doc_counts_.at(item));
    auto& item_df = table.df_[item];
    for (const auto& [word, n] : words) {
      item_df[word] = static_cast<double>(n) / n_docs;
      ++table.items_containing_[word];
    }
  }
  const auto n_items = static_cast<double>(table.item_doc_counts_.size());
  for (const auto& [word, n] : table.items_containing_) {
    table.iif_[word] = std::log(n_items / static_cast<double>(n));
  }
  return table;
}

const std::array<std::string, kFeatureCount>& feature_names() {
  static const std::array<std::string, kFeatureCount> names = {
      "max_dfiif", "mean_dfiif", "char_len", "token_count", "title_overlap"};
  return names;
}

FeatureVector featurize(const DfIifTable& table,
                        const corpus::SentenceExample& example) {
  const auto tokens = textprep::normalize(example.sentence);
  FeatureVector f;
  f.char_len = static_cast<double>(corpus::code_point_length(example.sentence)) / 100.0;
  f.token_count = static_cast<double>(tokens.size()) / 10.0;
  if (!tokens.empty()) {
    double sum = 0.0;
    for (const std::string& t : tokens) {
      const double s = table.dfiif(t, example.book_id);
      sum += s;
      f.max_dfiif = std::max(f.max_dfiif, s);
    }
    f.mean_dfiif = sum / static_cast<double>(tokens.size());
  }

  const auto title_tokens = textprep::normalize(example.title);
  const std::set<std::string> title_set(title_tokens.begin(), title_tokens.end());
  const std::set<std::string> sentence_set(tokens.begin(), tokens.end());
  std::vector<std::string> shared;
  std::set_intersection(title_set.begin(), title_set.end(), sentence_set.begin(),
                        sentence_set.end(), std::back_inserter(shared));
  f.title_overlap = static_cast<double>(shared.size());
  return f;
}

nlohmann::json BaselineModel::to_json() const {
  return {{"version", 1},
          {"weights", weights},
          {"bias", bias},
          {"feature_names", feature_names()}};
}

BaselineModel BaselineModel::from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) {
      throw DataError("unsupported baseline model version " + j.at("version").dump());
    }
    const auto w = j.at("weights").get<std::vector<double>>();
    if (w.size() != kFeatureCount) throw DataError("baseline model has wrong weight count");
    BaselineModel m;
    std::copy(w.begin(), w.end(), m.weights.begin());
    m.bias = j.at("bias").get<double>();
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed baseline model: ") + e.what());
  }
}

double baseline_logit(const BaselineModel& model, const FeatureVector& x) {
  const auto v = x.values();
  double z = model.bias;
  for (std::size_t k = 0; k < kFeatureCount; ++k) z += model.weights[k] * v[k];
  return z;
}

double predict_baseline(const BaselineModel& model, const FeatureVector& x) {
  return network::sigmoid(baseline_logit(model, x));
}

BaselineFit train_baseline(const std::vector<FeatureVector>& features,
                           const std::vector<int>& labels, double lr,
                           std::size_t epochs) {
  if (features.size() != labels.size()) {
    throw InvalidArgument("features and labels differ in length");
  }
  const auto positives = std::count(labels.begin(), labels.end(), 1);
  if (positives == 0 || positives == static_cast<long>(labels.size())) {
    throw DataError("baseline training needs both classes");
  }

  const auto n = static_cast<double>(features.size());
  BaselineFit fit;
  auto step = [&](bool update) {
    std::array<double, kFeatureCount> grad_w{};
    double grad_b = 0.0;
    double loss = 0.0;
    for (std::size_t i = 0; i < features.size(); ++i) {
      const double z = baseline_logit(fit.model, features[i]);
      loss += network::bce_with_logits(z, labels[i]);
      const double dz = network::bce_with_logits_grad(z, labels[i]);
      const auto v = features[i].values();
      for (std::size_t k = 0; k < kFeatureCount; ++k) grad_w[k] += dz * v[k];
      grad_b += dz;
    }
    if (update) {
      for (std::size_t k = 0; k < kFeatureCount; ++k) {
        fit.model.weights[k] -= lr * grad_w[k] / n;
      }
      fit.model.bias -= lr * grad_b / n;
    }
    return loss / n;
  };

  fit.loss_history.reserve(epochs);
  for (std::size_t e = 0; e < epochs; ++e) fit.loss_history.push_back(step(true));
  fit.final_loss = step(false);
  return fit;
}

}  // namespace spoiler::features
