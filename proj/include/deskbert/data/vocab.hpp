#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace deskbert::data {

// Bidirectional token <-> id map with the special tokens at fixed ids.
class Vocabulary {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kUnk = 1;
  static constexpr std::size_t kCls = 2;
  static constexpr std::size_t kSep = 3;
  static constexpr std::size_t kMask = 4;
  static constexpr std::size_t kNumSpecial = 5;

  Vocabulary();

  std::size_t size() const { return tokens_.size(); }
  // Unknown tokens map to kUnk.
  std::size_t id_of(std::string_view token) const;
  std::size_t id_of(char32_t cp) const;
  bool contains(std::string_view token) const;
  const std::string& token(std::size_t id) const;
  static bool is_special(std::size_t id) { return id < kNumSpecial; }

  // Appends a token; returns its id (existing id if already present).
  std::size_t add(std::string token);

  // One token per line, in id order.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);

  friend bool operator==(const Vocabulary& a, const Vocabulary& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, std::size_t> ids_;
};

// Sentences of one document; documents are separated by blank lines in the
// corpus file, one sentence per line.
using Document = std::vector<std::u32string>;

std::vector<Document> read_corpus(const std::filesystem::path& path);
std::vector<Document> parse_corpus(std::string_view text);

// Non-whitespace characters of a sentence; each becomes one token.
std::u32string sentence_chars(std::u32string_view sentence);

// Specials first, then characters by descending frequency (ties by code
// point), dropping those seen fewer than `min_count` times. `max_size`
// bounds the total including specials (0 = unbounded).
Vocabulary build_vocab(const std::vector<std::filesystem::path>& corpus_paths, std::size_t min_count,
                       std::size_t max_size);
Vocabulary build_vocab_from_text(std::string_view text, std::size_t min_count, std::size_t max_size);

}  // namespace deskbert::data
