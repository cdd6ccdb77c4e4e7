#pragma once

#include <cstddef>
#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace deskbert::data {

// Half-open range [begin, end) of token positions.
struct Span {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t length() const { return end - begin; }
  friend bool operator==(const Span&, const Span&) = default;
};

// Multi-character words; single characters are the implicit fallback.
class Lexicon {
 public:
  Lexicon() = default;

  // Words shorter than two characters are rejected.
  void add(std::u32string word);
  bool contains(std::u32string_view word) const { return words_.contains(std::u32string(word)); }
  std::size_t size() const { return words_.size(); }
  bool empty() const { return words_.empty(); }
  std::size_t max_word_length() const { return max_len_; }

  // One word per line, UTF-8; blank lines and surrounding whitespace ignored.
  static Lexicon load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;

 private:
  std::set<std::u32string> words_;
  std::size_t max_len_ = 0;
};

// Pluggable word segmenter; spans must partition the input.
class WordSegmenter {
 public:
  virtual ~WordSegmenter() = default;
  virtual std::vector<Span> segment(std::u32string_view chars) const = 0;
};

// Greedy longest match, left to right, against a lexicon.
class LexiconSegmenter final : public WordSegmenter {
 public:
  explicit LexiconSegmenter(Lexicon lexicon) : lexicon_(std::move(lexicon)) {}
  std::vector<Span> segment(std::u32string_view chars) const override;
  const Lexicon& lexicon() const { return lexicon_; }

 private:
  Lexicon lexicon_;
};

std::vector<Span> segment_words(std::u32string_view chars, const Lexicon& lexicon);

}  // namespace deskbert::data
