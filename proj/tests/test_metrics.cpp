#include <cmath>
#include <vector>

#include "doctest.h"
#include "spoiler/error.hpp"
#include "spoiler/metrics.hpp"
#include "spoiler/network.hpp"
#include "spoiler/random.hpp"
#include "spoiler/textprep.hpp"

using namespace spoiler;
using namespace spoiler::metrics;

namespace {

struct Instance {
  std::vector<double> scores;
  std::vector<int> labels;
};

// Both classes present; scores drawn from a small grid when ties are wanted.
Instance random_instance(Rng& rng, bool ties) {
  Instance in;
  const std::size_t n = 2 + rng.below(199);
  for (std::size_t i = 0; i < n; ++i) {
    in.scores.push_back(ties ? static_cast<double>(rng.below(6)) / 5.0 : rng.uniform());
    in.labels.push_back(rng.uniform() < 0.3 ? 1 : 0);
  }
  in.labels[0] = 1;
  in.labels[1] = 0;
  return in;
}

}  // namespace

TEST_CASE("roc_auc examples") {
  const std::vector<double> perfect = {0.9, 0.8, 0.2, 0.1};
  const std::vector<int> labels = {1, 1, 0, 0};
  CHECK(roc_auc(perfect, labels) == 1.0);
  const std::vector<double> reversed = {0.1, 0.2, 0.8, 0.9};
  CHECK(roc_auc(reversed, labels) == 0.0);
  const std::vector<double> constant(4, 0.3);
  CHECK(roc_auc(constant, labels) == 0.5);
  CHECK(roc_auc(std::vector<double>{0.4, 0.4}, std::vector<int>{1, 0}) == 0.5);
  CHECK_THROWS_AS(roc_auc(perfect, std::vector<int>{1, 1, 1, 1}), DataError);
  CHECK_THROWS_AS(roc_auc(perfect, std::vector<int>{1, 0}), InvalidArgument);
}

TEST_CASE("roc_auc agrees with the pairwise oracle") {
  Rng rng(2024);
  for (int k = 0; k < 1000; ++k) {
    const auto in = random_instance(rng, k % 2 == 0);
    CHECK(std::abs(roc_auc(in.scores, in.labels) - auc_oracle(in.scores, in.labels)) < 1e-12);
  }
}

TEST_CASE("auc properties") {
  Rng rng(5);
  for (int k = 0; k < 100; ++k) {
    auto in = random_instance(rng, false);
    const double base = roc_auc(in.scores, in.labels);

    std::vector<double> affine, cubed;
    for (double s : in.scores) {
      affine.push_back(2 * s + 1);
      cubed.push_back(s * s * s);
    }
    CHECK(std::abs(roc_auc(affine, in.labels) - base) < 1e-12);
    CHECK(std::abs(roc_auc(cubed, in.labels) - base) < 1e-12);

    for (int& y : in.labels) y = 1 - y;
    CHECK(std::abs(roc_auc(in.scores, in.labels) - (1.0 - base)) < 1e-12);
  }
}

TEST_CASE("confusion") {
  const std::vector<double> scores = {0.9, 0.1};
  const std::vector<int> labels = {1, 0};
  const auto c = confusion(scores, labels);
  CHECK(c.tp == 1);
  CHECK(c.tn == 1);
  CHECK(c.fp == 0);
  CHECK(c.fn == 0);

  const auto all = confusion(scores, labels, 0.0);
  CHECK(all.tn == 0);
  CHECK(all.fp == 1);
  const auto none = confusion(scores, labels, 1.0);
  CHECK(none.tp == 0);
  CHECK(none.fp == 0);

  // score == threshold counts as positive
  CHECK(confusion(std::vector<double>{0.5}, std::vector<int>{1}).tp == 1);

  Rng rng(9);
  const auto in = random_instance(rng, true);
  const auto ref = confusion(in.scores, in.labels, 0.5);
  for (double t : {0.0, 0.2, 0.41, 0.8, 1.0, 1.5}) {
    const auto x = confusion(in.scores, in.labels, t);
    CHECK(x.tp + x.fn == ref.tp + ref.fn);
    CHECK(x.fp + x.tn == ref.fp + ref.tn);
  }
}

TEST_CASE("roc_curve") {
  const std::vector<double> scores = {0.9, 0.5, 0.5, 0.1};
  const std::vector<int> labels = {1, 0, 1, 0};
  const auto roc = roc_curve(scores, labels);
  REQUIRE(roc.size() == 4);
  CHECK(std::isinf(roc[0].threshold));
  CHECK(roc[0].fpr == 0.0);
  CHECK(roc[0].tpr == 0.0);
  CHECK(roc[1].tpr == 0.5);
  CHECK(roc[2].fpr == 0.5);
  CHECK(roc[2].tpr == 1.0);
  CHECK(roc.back().fpr == 1.0);
  CHECK(roc.back().tpr == 1.0);
}

TEST_CASE("report on a 20-example hand-scored fixture") {
  const std::vector<double> scores = {0.95, 0.90, 0.85, 0.80, 0.80, 0.70, 0.65,
                                      0.60, 0.55, 0.50, 0.50, 0.45, 0.40, 0.35,
                                      0.30, 0.30, 0.20, 0.15, 0.10, 0.05};
  const std::vector<int> labels = {1, 1, 0, 1, 0, 1, 0, 0, 1, 1,
                                   0, 0, 0, 1, 0, 0, 1, 0, 0, 0};
  const auto r = make_report(scores, labels);
  CHECK(r.n_pos == 8);
  CHECK(r.n_neg == 12);
  // 68 of 96 positive-negative pairs ordered correctly, ties counted half.
  CHECK(r.auc == doctest::Approx(68.0 / 96.0).epsilon(1e-15));
  CHECK(r.tp == 6);
  CHECK(r.fp == 5);
  CHECK(r.tn == 7);
  CHECK(r.fn == 2);
  CHECK(r.precision == doctest::Approx(6.0 / 11.0));
  CHECK(r.recall == doctest::Approx(0.75));
  CHECK(r.precision_defined);
  CHECK(r.recall_defined);

  const auto j = to_json(r);
  CHECK(j["auc"].get<double>() == r.auc);
  CHECK(j["roc"][0]["threshold"].is_null());
  CHECK_FALSE(to_json(r, false).contains("roc"));
}

TEST_CASE("report with no predicted positives") {
  const auto r = make_report(std::vector<double>{0.1, 0.2}, std::vector<int>{1, 0});
  CHECK_FALSE(r.precision_defined);
  CHECK(r.recall_defined);
  CHECK(r.recall == 0.0);
}

TEST_CASE("evaluate") {
  network::NetworkConfig nc;
  nc.vocab_size = 20;
  nc.embed_dim = 4;
  nc.hidden_dim = 3;
  nc.max_len = 10;
  auto params = network::init_params(nc, 1);
  params.dense_w.setZero();

  textprep::EncoderConfig ec{20, 10};
  const textprep::Vocabulary vocab(ec, {"harry", "dies", "good"});
  std::vector<corpus::SentenceExample> examples(3);
  examples[0].sentence = "harry dies";
  examples[0].label = 1;
  examples[1].sentence = "good";
  examples[2].sentence = "";

  const auto r = evaluate(params, vocab, examples);
  CHECK(r.auc == 0.5);
  CHECK(r.n_pos == 1);
  CHECK(r.tp == 1);  // constant 0.5 meets the threshold
  CHECK(r.fp == 2);

  for (auto& ex : examples) ex.label = 0;
  CHECK_THROWS_AS(evaluate(params, vocab, examples), DataError);
}
