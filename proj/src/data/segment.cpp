#include "deskbert/data/segment.hpp"

#include <algorithm>
#include <fstream>

#include "deskbert/data/utf8.hpp"
#include "deskbert/error.hpp"

namespace deskbert::data {

void Lexicon::add(std::u32string word) {
  if (word.size() < 2) throw std::invalid_argument("lexicon words must have at least two characters");
  max_len_ = std::max(max_len_, word.size());
  words_.insert(std::move(word));
}

Lexicon Lexicon::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot read lexicon " + path.string());
  Lexicon lex;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::u32string word;
    try {
      for (char32_t cp : decode_utf8(line))
        if (!is_space(cp)) word.push_back(cp);
    } catch (const UserError& e) {
      throw UserError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
    // Single characters are already the fallback segmentation.
    if (word.size() >= 2) lex.add(std::move(word));
  }
  return lex;
}

void Lexicon::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write lexicon " + path.string());
  for (const auto& w : words_) out << encode_utf8(w) << '\n';
}

std::vector<Span> segment_words(std::u32string_view chars, const Lexicon& lexicon) {
  std::vector<Span> spans;
  std::size_t i = 0;
  while (i < chars.size()) {
    std::size_t len = 1;
    const std::size_t longest = std::min(lexicon.max_word_length(), chars.size() - i);
    for (std::size_t cand = longest; cand >= 2; --cand) {
      if (lexicon.contains(chars.substr(i, cand))) {
        len = cand;
        break;
      }
    }
    spans.push_back({i, i + len});
    i += len;
  }
  return spans;
}

std::vector<Span> LexiconSegmenter::segment(std::u32string_view chars) const { return segment_words(chars, lexicon_); }

}  // namespace deskbert::data
