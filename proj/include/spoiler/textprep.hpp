#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "json.hpp"

namespace spoiler::textprep {

struct EncoderConfig {
  std::size_t vocab_size = 8000;
  std::size_t max_len = 600;  // tokens, not characters
  static constexpr std::int32_t pad_id = 0;
  static constexpr std::int32_t oov_id = 1;
  static constexpr std::int32_t first_word_id = 2;

  // Throws InvalidArgument.
  void validate() const;
};

struct TokenSequence {
  std::vector<std::int32_t> ids;  // always max_len long
  std::size_t true_len = 0;
};

// Lowercases, maps every non letter/digit to a space and splits on runs of
// whitespace. Text is treated as UTF-8: ASCII and Latin-1 letters are
// lowercased, other non-ASCII code points count as letters unless they fall
// in a Unicode punctuation/symbol block.
std::vector<std::string> normalize(std::string_view text);

class Vocabulary {
 public:
  Vocabulary() = default;
  Vocabulary(EncoderConfig config, std::vector<std::string> words);

  const EncoderConfig& config() const { return config_; }
  // Position p holds the word with id p + 2.
  const std::vector<std::string>& words() const { return words_; }

  // Id of a word, or oov_id.
  std::int32_t id(const std::string& word) const;

  TokenSequence encode(std::string_view title, std::string_view sentence) const;

  nlohmann::json to_json() const;
  static Vocabulary from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static Vocabulary load(const std::string& path);

 private:
  EncoderConfig config_;
  std::vector<std::string> words_;
  std::unordered_map<std::string, std::int32_t> index_;
};

// Real token ids of title ++ sentence, as fed to the network. A text with
// no tokens becomes a single OOV token so the model always sees one step.
std::vector<std::int32_t> model_input(const Vocabulary& vocab, std::string_view title,
                                      std::string_view sentence);

// Keeps the vocab_size - 2 most frequent tokens; ties go to the
// lexicographically smaller word.
Vocabulary build_vocabulary(const std::vector<std::vector<std::string>>& token_lists,
                            const EncoderConfig& config);

}  // namespace spoiler::textprep
