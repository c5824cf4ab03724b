#include <algorithm>
#include <set>
#include <sstream>

#include "doctest.h"
#include "spoiler/corpus.hpp"
#include "spoiler/error.hpp"
#include "spoiler/textprep.hpp"
#include "synthetic.hpp"

using namespace spoiler;
using namespace spoiler::corpus;

namespace {

const char* kReviewLine =
    R"({"book_id":"b1","user_id":"u1","review_id":"r1","rating":4,"has_spoiler":true,)"
    R"("review_sentences":[[0,"Fun read."],[1,"She dies."]],"timestamp":"2017-03-22"})";

std::string review_line(const std::string& id, std::size_t n_sentences, int flag = 0) {
  std::string s = R"({"book_id":"b","user_id":"u","review_id":")" + id +
                  R"(","rating":3,"has_spoiler":)" + (flag ? "true" : "false") +
                  R"(,"review_sentences":[)";
  for (std::size_t i = 0; i < n_sentences; ++i) {
    if (i) s += ",";
    s += "[" + std::to_string(flag) + ",\"s" + std::to_string(i) + "\"]";
  }
  return s + R"(],"timestamp":"t"})";
}

std::vector<SentenceExample> single_sentence_examples(std::size_t n) {
  std::vector<SentenceExample> out;
  for (std::size_t i = 0; i < n; ++i) {
    out.push_back({"b", "r" + std::to_string(i), 0, "", "text", static_cast<int>(i % 2)});
  }
  return out;
}

}  // namespace

TEST_CASE("parse_reviews maps fields") {
  std::istringstream in(kReviewLine);
  const auto file = parse_reviews(in);
  REQUIRE(file.reviews.size() == 1);
  const RawReview& r = file.reviews[0];
  CHECK(r.book_id == "b1");
  CHECK(r.user_id == "u1");
  CHECK(r.review_id == "r1");
  CHECK(r.rating == 4);
  CHECK(r.has_spoiler);
  CHECK(r.timestamp == "2017-03-22");
  REQUIRE(r.review_sentences.size() == 2);
  CHECK(r.review_sentences[0].flag == 0);
  CHECK(r.review_sentences[1].flag == 1);
  CHECK(r.review_sentences[1].text == "She dies.");
  CHECK(file.report.skipped.empty());
}

TEST_CASE("parse_reviews on an empty stream") {
  std::istringstream in("");
  const auto file = parse_reviews(in);
  CHECK(file.reviews.empty());
  CHECK(file.report.skipped.empty());
}

TEST_CASE("parse_reviews skips a truncated line and reports its number") {
  std::string text = review_line("a", 1) + "\n" + review_line("b", 2) + "\n" +
                     R"({"book_id":"b","user_id":"u","review_id":"c","rat)" + "\n" +
                     review_line("d", 1) + "\n";
  std::istringstream in(text);
  const auto file = parse_reviews(in);
  CHECK(file.reviews.size() == 3);
  REQUIRE(file.report.skipped.size() == 1);
  CHECK(file.report.skipped[0].line == 3);
  CHECK(file.reviews[2].review_id == "d");
}

TEST_CASE("parse_reviews rejects schema violations per line") {
  const std::vector<std::string> bad = {
      R"({"book_id":"b","user_id":"u","review_id":"x","rating":3,"has_spoiler":false,"review_sentences":[],"timestamp":"t"})",
      R"({"book_id":"b","user_id":"u","review_id":"x","rating":3,"has_spoiler":false,"review_sentences":[[2,"s"]],"timestamp":"t"})",
      R"({"book_id":"b","user_id":"u","review_id":"x","rating":9,"has_spoiler":false,"review_sentences":[[0,"s"]],"timestamp":"t"})",
      R"({"book_id":"b","review_id":"x","rating":3,"has_spoiler":false,"review_sentences":[[0,"s"]],"timestamp":"t"})",
      R"([1,2,3])",
  };
  std::string text;
  for (const auto& line : bad) text += line + "\n";
  std::istringstream in(text);
  const auto file = parse_reviews(in);
  CHECK(file.reviews.empty());
  CHECK(file.report.skipped.size() == bad.size());
}

TEST_CASE("parse_reviews counts has_spoiler mismatches but keeps the review") {
  std::istringstream in(
      R"({"book_id":"b","user_id":"u","review_id":"x","rating":3,"has_spoiler":true,"review_sentences":[[0,"s"]],"timestamp":"t"})");
  const auto file = parse_reviews(in);
  CHECK(file.reviews.size() == 1);
  CHECK(file.report.has_spoiler_mismatches == 1);
}

TEST_CASE("parse_reviews on an unreadable stream is fatal") {
  std::istringstream in("x");
  in.setstate(std::ios::badbit);
  CHECK_THROWS_AS(parse_reviews(in), DataError);
  CHECK_THROWS_AS(parse_reviews_file("/nonexistent/reviews.jsonl"), DataError);
}

TEST_CASE("parse_titles") {
  SUBCASE("single entry") {
    std::istringstream in(R"({"book_id":"b1","title":"Harry Potter"})");
    const auto t = parse_titles(in);
    CHECK(t.titles.size() == 1);
    CHECK(t.titles.at("b1") == "Harry Potter");
  }
  SUBCASE("last occurrence wins") {
    std::istringstream in("{\"book_id\":\"b1\",\"title\":\"T1\"}\n{\"book_id\":\"b1\",\"title\":\"T2\"}\n");
    const auto t = parse_titles(in);
    CHECK(t.titles.at("b1") == "T2");
    CHECK(t.duplicates == 1);
  }
  SUBCASE("empty stream") {
    std::istringstream in("");
    CHECK(parse_titles(in).titles.empty());
  }
  SUBCASE("missing title is skipped") {
    std::istringstream in("{\"book_id\":\"b1\"}\n{\"book_id\":\"b2\",\"title\":\"T\"}\n");
    const auto t = parse_titles(in);
    CHECK(t.titles.size() == 1);
    REQUIRE(t.skipped.size() == 1);
    CHECK(t.skipped[0].line == 1);
  }
}

TEST_CASE("flatten preserves count and order") {
  std::vector<RawReview> reviews(2);
  reviews[0].review_id = "r1";
  reviews[0].book_id = "b1";
  reviews[0].review_sentences = {{0, "a"}, {1, "b"}, {0, "c"}};
  reviews[1].review_id = "r2";
  reviews[1].book_id = "b2";
  reviews[1].review_sentences = {{1, "d"}, {0, "e"}};

  const auto flat = flatten(reviews, {{"b1", "Dune"}}, TitlePolicy::attach);
  REQUIRE(flat.examples.size() == 5);
  const std::vector<std::string> order = {"a", "b", "c", "d", "e"};
  for (std::size_t i = 0; i < 5; ++i) CHECK(flat.examples[i].sentence == order[i]);
  CHECK(flat.examples[1].label == 1);
  CHECK(flat.examples[2].sentence_index == 2);
  CHECK(flat.examples[0].title == "Dune");
  CHECK(flat.examples[2].title == "Dune");
  CHECK(flat.examples[3].title == "");
  CHECK(flat.title_misses == 2);

  const auto omitted = flatten(reviews, {{"b1", "Dune"}}, TitlePolicy::omit);
  for (const auto& ex : omitted.examples) CHECK(ex.title.empty());
  CHECK(omitted.title_misses == 0);
}

TEST_CASE("flatten conservation on generated corpora") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    testing::SyntheticConfig config;
    config.n_sentences = 300 + 37 * seed;
    config.seed = seed;
    const auto syn = testing::make_synthetic_corpus(config);
    std::size_t total = 0;
    for (const auto& r : syn.reviews) total += r.review_sentences.size();
    CHECK(flatten(syn.reviews, syn.titles, TitlePolicy::attach).examples.size() == total);
  }
}

TEST_CASE("split is deterministic and review-atomic") {
  std::vector<SentenceExample> examples;
  for (int r = 0; r < 10; ++r) {
    for (int s = 0; s <= r % 3; ++s) {
      examples.push_back({"b", "r" + std::to_string(r), static_cast<std::size_t>(s), "",
                          "x", s % 2});
    }
  }
  const auto a = split(examples, {0.8, 0.1, 0.1}, 7);
  const auto b = split(examples, {0.8, 0.1, 0.1}, 7);
  auto ids = [](const std::vector<SentenceExample>& part) {
    std::vector<std::pair<std::string, std::size_t>> out;
    for (const auto& ex : part) out.emplace_back(ex.review_id, ex.sentence_index);
    return out;
  };
  CHECK(ids(a.train) == ids(b.train));
  CHECK(ids(a.validation) == ids(b.validation));
  CHECK(ids(a.test) == ids(b.test));
  CHECK(a.seed == 7);
}

TEST_CASE("split partition property") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    testing::SyntheticConfig config;
    config.n_sentences = 500;
    config.seed = seed + 100;
    const auto syn = testing::make_synthetic_corpus(config);
    const auto flat = flatten(syn.reviews, syn.titles, TitlePolicy::attach).examples;
    const auto parts = split(flat, {0.7, 0.2, 0.1}, seed);

    std::map<std::pair<std::string, std::size_t>, int> seen;
    std::map<std::string, int> review_part;
    int part_no = 0;
    for (const auto* part : {&parts.train, &parts.validation, &parts.test}) {
      CHECK_FALSE(part->empty());
      for (const auto& ex : *part) {
        ++seen[{ex.review_id, ex.sentence_index}];
        auto [it, inserted] = review_part.emplace(ex.review_id, part_no);
        CHECK(it->second == part_no);
      }
      ++part_no;
    }
    CHECK(seen.size() == flat.size());
    for (const auto& [key, count] : seen) CHECK(count == 1);
  }
}

TEST_CASE("split sizes for single-sentence reviews") {
  const auto parts = split(single_sentence_examples(100), {0.8, 0.1, 0.1}, 3);
  CHECK(parts.train.size() == 80);
  CHECK(parts.validation.size() == 10);
  CHECK(parts.test.size() == 10);
}

TEST_CASE("split errors") {
  CHECK_THROWS_AS(split(single_sentence_examples(2), {0.8, 0.1, 0.1}, 1), DataError);
  CHECK_THROWS_AS(split(single_sentence_examples(10), {0.8, 0.1, 0.2}, 1), InvalidArgument);
  CHECK_THROWS_AS(split(single_sentence_examples(10), {1.0, 0.0, 0.0}, 1), InvalidArgument);
  // Three reviews always yield three non-empty partitions.
  const auto parts = split(single_sentence_examples(3), {0.98, 0.01, 0.01}, 5);
  CHECK(parts.train.size() == 1);
  CHECK(parts.validation.size() == 1);
  CHECK(parts.test.size() == 1);
}

TEST_CASE("compute_stats on small fixtures") {
  SUBCASE("empty input") {
    const auto s = compute_stats({});
    CHECK(s.n_reviews == 0);
    CHECK(s.n_sentences == 0);
    CHECK(s.spoiler_len_mean == 0.0);
    CHECK(s.spoiler_fraction() == 0.0);
  }
  SUBCASE("single non-spoiler sentence") {
    RawReview r;
    r.review_sentences = {{0, "ab"}};
    const auto s = compute_stats({r});
    CHECK(s.nonspoiler_len_mean == 2.0);
    CHECK(s.nonspoiler_len_median == 2.0);
    CHECK(s.n_spoiler_sentences == 0);
  }
  SUBCASE("two reviews, five sentences, spoilers of 10 and 20 chars") {
    RawReview a;
    a.user_id = "u1";
    a.book_id = "b1";
    a.review_sentences = {{1, std::string(10, 'x')}, {0, "abc"}, {0, "de"}};
    RawReview b;
    b.user_id = "u2";
    b.book_id = "b1";
    b.review_sentences = {{0, "f"}, {1, std::string(20, 'y')}};
    const auto s = compute_stats({a, b});
    CHECK(s.n_sentences == 5);
    CHECK(s.n_spoiler_sentences == 2);
    CHECK(s.spoiler_len_mean == 15.0);
    CHECK(s.spoiler_len_median == 10.0);  // lower middle of {10, 20}
    CHECK(s.n_unique_books == 1);
    CHECK(s.reviews_per_book_mean == 2.0);
  }
}

TEST_CASE("compute_stats label count matches a brute-force pass") {
  testing::SyntheticConfig config;
  config.n_sentences = 2000;
  config.positive_rate = 0.07;
  const auto syn = testing::make_synthetic_corpus(config);
  std::size_t flagged = 0;
  for (const auto& r : syn.reviews) {
    for (const auto& s : r.review_sentences) flagged += s.flag == 1 ? 1 : 0;
  }
  const auto s = compute_stats(syn.reviews);
  CHECK(s.n_spoiler_sentences == flagged);
  CHECK(s.n_sentences == s.n_spoiler_sentences + s.n_nonspoiler_sentences);
}

TEST_CASE("code points, not bytes") {
  CHECK(code_point_length("Café") == 4);
  CHECK(code_point_length("") == 0);
  CHECK(code_point_length("日本") == 2);
}

TEST_CASE("synthetic corpus composition") {
  const testing::SyntheticConfig config;
  const auto syn = testing::make_synthetic_corpus(config);
  const auto flat = flatten(syn.reviews, syn.titles, TitlePolicy::attach);
  REQUIRE(flat.examples.size() == 10000);

  std::size_t positives = 0, slice_pos = 0, slice_neg = 0;
  std::set<std::size_t> slice_pos_lengths, slice_neg_lengths;
  for (const auto& ex : flat.examples) {
    positives += ex.label == 1 ? 1 : 0;
    const auto tokens = textprep::normalize(ex.sentence);
    const bool has_plot = std::any_of(tokens.begin(), tokens.end(), [&](const std::string& t) {
      return std::find(syn.plot_tokens.begin(), syn.plot_tokens.end(), t) != syn.plot_tokens.end();
    });
    if (ex.label == 1) CHECK(has_plot);
    if (!testing::in_slice(syn, ex)) continue;
    CHECK(has_plot);
    // The character name leads the sentence; it matches the title only for positives.
    const auto title = textprep::normalize(ex.title);
    const bool named_in_title = std::find(title.begin(), title.end(), tokens[0]) != title.end();
    CHECK(named_in_title == (ex.label == 1));
    (ex.label == 1 ? slice_pos : slice_neg) += 1;
    (ex.label == 1 ? slice_pos_lengths : slice_neg_lengths).insert(tokens.size());
  }
  CHECK(positives == 300);
  CHECK(slice_pos == 90);
  CHECK(slice_neg == 90 * config.hard_negatives_per_context);
  // No length cue separates the slice classes.
  CHECK(slice_pos_lengths == slice_neg_lengths);
}
