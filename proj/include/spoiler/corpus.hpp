#pragma once

#include <cstdint>
#include <istream>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

namespace spoiler::corpus {

struct FlaggedSentence {
  int flag = 0;  // 1 = spoiler
  std::string text;
};

// One line of the Goodreads spoiler dump.
struct RawReview {
  std::string book_id;
  std::string user_id;
  std::string review_id;
  int rating = 0;
  bool has_spoiler = false;
  std::vector<FlaggedSentence> review_sentences;
  std::string timestamp;  // opaque
};

struct SentenceExample {
  std::string book_id;
  std::string review_id;
  std::size_t sentence_index = 0;  // position within its review
  std::string title;               // empty when unknown or omitted
  std::string sentence;
  int label = 0;
};

struct DatasetSplit {
  std::vector<SentenceExample> train;
  std::vector<SentenceExample> validation;
  std::vector<SentenceExample> test;
  std::uint64_t seed = 0;
};

struct CorpusStats {
  std::size_t n_reviews = 0;
  std::size_t n_unique_users = 0;
  std::size_t n_unique_books = 0;
  double reviews_per_user_mean = 0.0;
  double reviews_per_user_median = 0.0;
  double reviews_per_book_mean = 0.0;
  double reviews_per_book_median = 0.0;
  std::size_t n_sentences = 0;
  std::size_t n_spoiler_sentences = 0;
  std::size_t n_nonspoiler_sentences = 0;
  double spoiler_len_mean = 0.0;
  double spoiler_len_median = 0.0;
  double nonspoiler_len_mean = 0.0;
  double nonspoiler_len_median = 0.0;

  // Share of sentences that are spoilers / non-spoilers, 0 when empty.
  double spoiler_fraction() const;
  double nonspoiler_fraction() const;
};

struct LineIssue {
  std::size_t line = 0;  // 1-based
  std::string reason;
};

struct ParseReport {
  std::size_t lines_read = 0;
  std::vector<LineIssue> skipped;
  // Reviews whose has_spoiler disagrees with their sentence flags. Kept;
  // sentence flags win.
  std::size_t has_spoiler_mismatches = 0;
};

struct ReviewFile {
  std::vector<RawReview> reviews;
  ParseReport report;
};

struct TitleFile {
  std::map<std::string, std::string> titles;
  std::size_t duplicates = 0;
  std::vector<LineIssue> skipped;
};

enum class TitlePolicy { attach, omit };

struct FlattenResult {
  std::vector<SentenceExample> examples;
  std::size_t title_misses = 0;  // sentences whose book had no title
};

struct SplitFractions {
  double train = 0.9;
  double validation = 0.05;
  double test = 0.05;
};

// Reads newline-delimited JSON reviews. Malformed lines are skipped and
// recorded; a stream in a failed state throws DataError.
ReviewFile parse_reviews(std::istream& in);
ReviewFile parse_reviews_file(const std::string& path);

// Last occurrence wins for a repeated book_id.
TitleFile parse_titles(std::istream& in);
TitleFile parse_titles_file(const std::string& path);

FlattenResult flatten(const std::vector<RawReview>& reviews,
                      const std::map<std::string, std::string>& titles,
                      TitlePolicy policy);

// Review-level split: every sentence of a review lands in the same
// partition. Throws DataError for fewer than three reviews and
// InvalidArgument for bad fractions.
DatasetSplit split(const std::vector<SentenceExample>& examples,
                   SplitFractions fractions, std::uint64_t seed);

CorpusStats compute_stats(const std::vector<RawReview>& reviews);

// Number of Unicode code points in a UTF-8 string.
std::size_t code_point_length(const std::string& utf8);

nlohmann::json to_json(const CorpusStats& stats);

}  // namespace spoiler::corpus
