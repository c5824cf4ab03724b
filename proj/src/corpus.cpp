#include "spoiler/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <set>
#include <unordered_map>

#include "spoiler/error.hpp"
#include "spoiler/random.hpp"

namespace spoiler::corpus {

namespace {

using nlohmann::json;

const json& require(const json& obj, const char* key, json::value_t type) {
  auto it = obj.find(key);
  if (it == obj.end()) {
    throw std::runtime_error(std::string("missing field '") + key + "'");
  }
  // Integer literals parse as unsigned when non-negative.
  const bool ok = it->type() == type ||
                  (type == json::value_t::number_integer &&
                   it->type() == json::value_t::number_unsigned);
  if (!ok) {
    throw std::runtime_error(std::string("field '") + key +
                             "' has wrong type " + it->type_name());
  }
  return *it;
}

RawReview review_from_json(const json& j) {
  if (!j.is_object()) throw std::runtime_error("line is not a JSON object");
  RawReview r;
  r.book_id = require(j, "book_id", json::value_t::string).get<std::string>();
  r.user_id = require(j, "user_id", json::value_t::string).get<std::string>();
  r.review_id =
      require(j, "review_id", json::value_t::string).get<std::string>();
  r.rating = require(j, "rating", json::value_t::number_integer).get<int>();
  if (r.rating < 0 || r.rating > 5) {
    throw std::runtime_error("rating out of range 0-5");
  }
  r.has_spoiler =
      require(j, "has_spoiler", json::value_t::boolean).get<bool>();
  r.timestamp =
      require(j, "timestamp", json::value_t::string).get<std::string>();

  const json& sentences = require(j, "review_sentences", json::value_t::array);
  if (sentences.empty()) throw std::runtime_error("review_sentences is empty");
  r.review_sentences.reserve(sentences.size());
  for (const json& pair : sentences) {
    if (!pair.is_array() || pair.size() != 2 || !pair[0].is_number_integer() ||
        !pair[1].is_string()) {
      throw std::runtime_error("review_sentences entry is not [flag, text]");
    }
    const auto flag = pair[0].get<std::int64_t>();
    if (flag != 0 && flag != 1) throw std::runtime_error("flag is not 0 or 1");
    r.review_sentences.push_back(
        {static_cast<int>(flag), pair[1].get<std::string>()});
  }
  return r;
}

template <typename LineFn>
void for_each_line(std::istream& in, LineFn&& fn) {
  if (!in) throw DataError("input stream is not readable");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    fn(line_no, line);
  }
  if (in.bad()) throw DataError("read error after line " + std::to_string(line_no));
}

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  return in;
}

// Lower-middle element for even counts.
template <typename T>
double lower_median(std::vector<T> values) {
  if (values.empty()) return 0.0;
  const std::size_t mid = (values.size() - 1) / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<long>(mid),
                   values.end());
  return static_cast<double>(values[mid]);
}

template <typename T>
double mean(const std::vector<T>& values) {
  if (values.empty()) return 0.0;
  long double sum = 0;
  for (const T& v : values) sum += static_cast<long double>(v);
  return static_cast<double>(sum / static_cast<long double>(values.size()));
}

template <typename Key>
std::vector<std::size_t> group_sizes(const std::vector<RawReview>& reviews,
                                     Key key) {
  std::unordered_map<std::string, std::size_t> counts;
  for (const RawReview& r : reviews) ++counts[key(r)];
  std::vector<std::size_t> sizes;
  sizes.reserve(counts.size());
  for (const auto& [_, n] : counts) sizes.push_back(n);
  return sizes;
}

}  // namespace

double CorpusStats::spoiler_fraction() const {
  return n_sentences == 0 ? 0.0
                          : static_cast<double>(n_spoiler_sentences) /
                                static_cast<double>(n_sentences);
}

double CorpusStats::nonspoiler_fraction() const {
  return n_sentences == 0 ? 0.0
                          : static_cast<double>(n_nonspoiler_sentences) /
                                static_cast<double>(n_sentences);
}

ReviewFile parse_reviews(std::istream& in) {
  ReviewFile out;
  for_each_line(in, [&](std::size_t line_no, const std::string& line) {
    ++out.report.lines_read;
    try {
      RawReview r = review_from_json(json::parse(line));
      const bool any_flag =
          std::any_of(r.review_sentences.begin(), r.review_sentences.end(),
                      [](const FlaggedSentence& s) { return s.flag == 1; });
      if (any_flag != r.has_spoiler) ++out.report.has_spoiler_mismatches;
      out.reviews.push_back(std::move(r));
    } catch (const std::exception& e) {
      out.report.skipped.push_back({line_no, e.what()});
    }
  });
  return out;
}

ReviewFile parse_reviews_file(const std::string& path) {
  auto in = open_input(path);
  return parse_reviews(in);
}

TitleFile parse_titles(std::istream& in) {
  TitleFile out;
  for_each_line(in, [&](std::size_t line_no, const std::string& line) {
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw std::runtime_error("line is not a JSON object");
      auto book = require(j, "book_id", json::value_t::string).get<std::string>();
      auto title = require(j, "title", json::value_t::string).get<std::string>();
      auto [it, inserted] = out.titles.insert_or_assign(std::move(book),
                                                        std::move(title));
      if (!inserted) ++out.duplicates;
    } catch (const std::exception& e) {
      out.skipped.push_back({line_no, e.what()});
    }
  });
  return out;
}

TitleFile parse_titles_file(const std::string& path) {
  auto in = open_input(path);
  return parse_titles(in);
}

FlattenResult flatten(const std::vector<RawReview>& reviews,
                      const std::map<std::string, std::string>& titles,
                      TitlePolicy policy) {
  FlattenResult out;
  std::size_t total = 0;
  for (const RawReview& r : reviews) total += r.review_sentences.size();
  out.examples.reserve(total);

  for (const RawReview& r : reviews) {
    std::string title;
    bool missed = false;
    if (policy == TitlePolicy::attach) {
      auto it = titles.find(r.book_id);
      if (it != titles.end()) {
        title = it->second;
      } else {
        missed = true;
      }
    }
    for (std::size_t i = 0; i < r.review_sentences.size(); ++i) {
      const FlaggedSentence& s = r.review_sentences[i];
      out.examples.push_back({r.book_id, r.review_id, i, title, s.text, s.flag});
      if (missed) ++out.title_misses;
    }
  }
  return out;
}

DatasetSplit split(const std::vector<SentenceExample>& examples,
                   SplitFractions fractions, std::uint64_t seed) {
  const double parts[3] = {fractions.train, fractions.validation,
                           fractions.test};
  for (double p : parts) {
    if (!(p > 0.0)) throw InvalidArgument("split fractions must be positive");
  }
  if (std::abs(parts[0] + parts[1] + parts[2] - 1.0) > 1e-9) {
    throw InvalidArgument("split fractions must sum to 1");
  }

  // Groups in first-appearance order, so the pre-shuffle order is stable.
  std::vector<std::vector<std::size_t>> groups;
  std::unordered_map<std::string, std::size_t> group_of;
  for (std::size_t i = 0; i < examples.size(); ++i) {
    auto [it, inserted] = group_of.try_emplace(examples[i].review_id, groups.size());
    if (inserted) groups.emplace_back();
    groups[it->second].push_back(i);
  }
  if (groups.size() < 3) {
    throw DataError("need at least 3 reviews to split, got " +
                    std::to_string(groups.size()));
  }

  Rng rng(seed);
  rng.shuffle(std::span(groups));

  const auto n = static_cast<double>(examples.size());
  const std::size_t targets[2] = {
      static_cast<std::size_t>(std::llround(parts[0] * n)),
      static_cast<std::size_t>(std::llround(parts[1] * n))};

  DatasetSplit out;
  out.seed = seed;
  std::vector<SentenceExample>* dest[3] = {&out.train, &out.validation,
                                           &out.test};
  std::size_t part = 0;
  for (std::size_t g = 0; g < groups.size(); ++g) {
    const std::size_t groups_left = groups.size() - g;
    // Move on once the target is met, and always leave one group for each
    // later partition.
    while (part < 2 && (dest[part]->size() >= targets[part] ||
                        groups_left <= 2 - part)) {
      if (dest[part]->empty()) break;
      ++part;
    }
    for (std::size_t idx : groups[g]) dest[part]->push_back(examples[idx]);
  }
  return out;
}

CorpusStats compute_stats(const std::vector<RawReview>& reviews) {
  CorpusStats s;
  s.n_reviews = reviews.size();
  if (reviews.empty()) return s;

  const auto per_user =
      group_sizes(reviews, [](const RawReview& r) { return r.user_id; });
  const auto per_book =
      group_sizes(reviews, [](const RawReview& r) { return r.book_id; });
  s.n_unique_users = per_user.size();
  s.n_unique_books = per_book.size();
  s.reviews_per_user_mean = mean(per_user);
  s.reviews_per_user_median = lower_median(per_user);
  s.reviews_per_book_mean = mean(per_book);
  s.reviews_per_book_median = lower_median(per_book);

  std::vector<std::size_t> spoiler_lens;
  std::vector<std::size_t> plain_lens;
  for (const RawReview& r : reviews) {
    for (const FlaggedSentence& sent : r.review_sentences) {
      (sent.flag == 1 ? spoiler_lens : plain_lens)
          .push_back(code_point_length(sent.text));
    }
  }
  s.n_spoiler_sentences = spoiler_lens.size();
  s.n_nonspoiler_sentences = plain_lens.size();
  s.n_sentences = s.n_spoiler_sentences + s.n_nonspoiler_sentences;
  s.spoiler_len_mean = mean(spoiler_lens);
  s.spoiler_len_median = lower_median(spoiler_lens);
  s.nonspoiler_len_mean = mean(plain_lens);
  s.nonspoiler_len_median = lower_median(plain_lens);
  return s;
}

std::size_t code_point_length(const std::string& utf8) {
  // Count every byte that is not a continuation byte.
  return static_cast<std::size_t>(
      std::count_if(utf8.begin(), utf8.end(), [](char c) {
        return (static_cast<unsigned char>(c) & 0xC0) != 0x80;
      }));
}

nlohmann::json to_json(const CorpusStats& s) {
  return {
      {"n_reviews", s.n_reviews},
      {"n_unique_users", s.n_unique_users},
      {"n_unique_books", s.n_unique_books},
      {"reviews_per_user_mean", s.reviews_per_user_mean},
      {"reviews_per_user_median", s.reviews_per_user_median},
      {"reviews_per_book_mean", s.reviews_per_book_mean},
      {"reviews_per_book_median", s.reviews_per_book_median},
      {"n_sentences", s.n_sentences},
      {"n_spoiler_sentences", s.n_spoiler_sentences},
      {"n_nonspoiler_sentences", s.n_nonspoiler_sentences},
      {"spoiler_len_mean", s.spoiler_len_mean},
      {"spoiler_len_median", s.spoiler_len_median},
      {"nonspoiler_len_mean", s.nonspoiler_len_mean},
      {"nonspoiler_len_median", s.nonspoiler_len_median},
      {"spoiler_fraction", s.spoiler_fraction()},
      {"nonspoiler_fraction", s.nonspoiler_fraction()},
  };
}

}  // namespace spoiler::corpus
