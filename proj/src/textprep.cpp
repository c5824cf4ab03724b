#include "spoiler/textprep.hpp"

#include <algorithm>
#include <fstream>

#include "spoiler/error.hpp"

namespace spoiler::textprep {

namespace {

// Decodes one code point starting at text[i] and advances i. Invalid bytes
// decode as U+FFFD and consume a single byte.
char32_t next_code_point(std::string_view text, std::size_t& i) {
  const auto lead = static_cast<unsigned char>(text[i]);
  int extra = 0;
  char32_t cp = 0;
  if (lead < 0x80) {
    ++i;
    return lead;
  } else if ((lead & 0xE0) == 0xC0) {
    extra = 1;
    cp = lead & 0x1F;
  } else if ((lead & 0xF0) == 0xE0) {
    extra = 2;
    cp = lead & 0x0F;
  } else if ((lead & 0xF8) == 0xF0) {
    extra = 3;
    cp = lead & 0x07;
  } else {
    ++i;
    return 0xFFFD;
  }
  if (i + static_cast<std::size_t>(extra) >= text.size()) {
    ++i;
    return 0xFFFD;
  }
  for (int k = 1; k <= extra; ++k) {
    const auto b = static_cast<unsigned char>(text[i + static_cast<std::size_t>(k)]);
    if ((b & 0xC0) != 0x80) {
      ++i;
      return 0xFFFD;
    }
    cp = (cp << 6) | (b & 0x3F);
  }
  i += static_cast<std::size_t>(extra) + 1;
  return cp;
}

void append_utf8(std::string& out, char32_t cp) {
  if (cp < 0x80) {
    out.push_back(static_cast<char>(cp));
  } else if (cp < 0x800) {
    out.push_back(static_cast<char>(0xC0 | (cp >> 6)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else if (cp < 0x10000) {
    out.push_back(static_cast<char>(0xE0 | (cp >> 12)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  } else {
    out.push_back(static_cast<char>(0xF0 | (cp >> 18)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 12) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | ((cp >> 6) & 0x3F)));
    out.push_back(static_cast<char>(0x80 | (cp & 0x3F)));
  }
}

bool is_word_char(char32_t cp) {
  if (cp < 0x80) {
    return (cp >= 'a' && cp <= 'z') || (cp >= 'A' && cp <= 'Z') ||
           (cp >= '0' && cp <= '9');
  }
  if (cp <= 0xBF) return false;                   // Latin-1 controls/symbols
  if (cp == 0xD7 || cp == 0xF7) return false;     // multiplication, division
  if (cp >= 0x2000 && cp <= 0x2BFF) return false;  // punctuation, symbols, arrows
  if (cp >= 0x3000 && cp <= 0x303F) return false;  // CJK punctuation
  if (cp >= 0xFE30 && cp <= 0xFE4F) return false;
  if (cp >= 0xFF00 && cp <= 0xFF0F) return false;  // fullwidth punctuation
  if (cp == 0xFFFD) return false;
  if (cp >= 0x1F000 && cp <= 0x1FAFF) return false;  // emoji and pictographs
  return true;
}

char32_t to_lower(char32_t cp) {
  if (cp >= 'A' && cp <= 'Z') return cp + 32;
  if (cp >= 0xC0 && cp <= 0xDE && cp != 0xD7) return cp + 32;
  return cp;
}

}  // namespace

void EncoderConfig::validate() const {
  if (vocab_size < 3) throw InvalidArgument("vocab_size must be at least 3");
  if (max_len < 1) throw InvalidArgument("max_len must be at least 1");
}

std::vector<std::string> normalize(std::string_view text) {
  std::vector<std::string> tokens;
  std::string current;
  std::size_t i = 0;
  while (i < text.size()) {
    const char32_t cp = next_code_point(text, i);
    if (is_word_char(cp)) {
      append_utf8(current, to_lower(cp));
    } else if (!current.empty()) {
      tokens.push_back(std::move(current));
      current.clear();
    }
  }
  if (!current.empty()) tokens.push_back(std::move(current));
  return tokens;
}

Vocabulary::Vocabulary(EncoderConfig config, std::vector<std::string> words)
    : config_(config), words_(std::move(words)) {
  config_.validate();
  if (words_.size() > config_.vocab_size - 2) {
    throw InvalidArgument("vocabulary holds more words than vocab_size - 2");
  }
  index_.reserve(words_.size());
  for (std::size_t p = 0; p < words_.size(); ++p) {
    const auto id = static_cast<std::int32_t>(p) + EncoderConfig::first_word_id;
    if (!index_.emplace(words_[p], id).second) {
      throw InvalidArgument("duplicate vocabulary word '" + words_[p] + "'");
    }
  }
}

std::int32_t Vocabulary::id(const std::string& word) const {
  auto it = index_.find(word);
  return it == index_.end() ? EncoderConfig::oov_id : it->second;
}

TokenSequence Vocabulary::encode(std::string_view title,
                                 std::string_view sentence) const {
  TokenSequence seq;
  seq.ids.assign(config_.max_len, EncoderConfig::pad_id);
  for (std::string_view part : {title, sentence}) {
    for (const std::string& token : normalize(part)) {
      if (seq.true_len == config_.max_len) return seq;
      seq.ids[seq.true_len++] = id(token);
    }
  }
  return seq;
}

nlohmann::json Vocabulary::to_json() const {
  return {{"version", 1},
          {"vocab_size", config_.vocab_size},
          {"max_len", config_.max_len},
          {"words", words_}};
}

Vocabulary Vocabulary::from_json(const nlohmann::json& j) {
  try {
    if (j.at("version").get<int>() != 1) {
      throw DataError("unsupported vocabulary version " + j.at("version").dump());
    }
    EncoderConfig config;
    config.vocab_size = j.at("vocab_size").get<std::size_t>();
    config.max_len = j.at("max_len").get<std::size_t>();
    return Vocabulary(config, j.at("words").get<std::vector<std::string>>());
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("malformed vocabulary: ") + e.what());
  } catch (const InvalidArgument& e) {
    throw DataError(std::string("malformed vocabulary: ") + e.what());
  }
}

void Vocabulary::save(const std::string& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path);
  out << to_json().dump() << '\n';
}

Vocabulary Vocabulary::load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw DataError(path + ": " + e.what());
  }
  return from_json(j);
}

std::vector<std::int32_t> model_input(const Vocabulary& vocab, std::string_view title,
                                      std::string_view sentence) {
  TokenSequence seq = vocab.encode(title, sentence);
  if (seq.true_len == 0) return {EncoderConfig::oov_id};
  seq.ids.resize(seq.true_len);
  return std::move(seq.ids);
}

Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_lists,
                            const EncoderConfig& config) {
  config.validate();
  std::unordered_map<std::string, std::size_t> counts;
  for (const auto& tokens : token_lists) {
    for (const std::string& t : tokens) ++counts[t];
  }
  std::vector<std::pair<std::string, std::size_t>> ranked(counts.begin(),
                                                          counts.end());
  const std::size_t keep = std::min(ranked.size(), config.vocab_size - 2);
  auto by_rank = [](const auto& a, const auto& b) {
    return a.second != b.second ? a.second > b.second : a.first < b.first;
  };
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<long>(keep),
                    ranked.end(), by_rank);
  std::vector<std::string> words;
  words.reserve(keep);
  for (std::size_t i = 0; i < keep; ++i) words.push_back(std::move(ranked[i].first));
  return Vocabulary(config, std::move(words));
}

}  // namespace spoiler::textprep
