#include "deskbert/data/vocab.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <sstream>

#include "deskbert/data/utf8.hpp"
#include "deskbert/error.hpp"

namespace deskbert::data {

Vocabulary::Vocabulary() {
  for (const char* special : {"[PAD]", "[UNK]", "[CLS]", "[SEP]", "[MASK]"}) add(special);
}

std::size_t Vocabulary::id_of(std::string_view token) const {
  const auto it = ids_.find(std::string(token));
  return it == ids_.end() ? kUnk : it->second;
}

std::size_t Vocabulary::id_of(char32_t cp) const { return id_of(encode_utf8(cp)); }

bool Vocabulary::contains(std::string_view token) const { return ids_.contains(std::string(token)); }

const std::string& Vocabulary::token(std::size_t id) const {
  if (id >= tokens_.size()) throw std::out_of_range("token id " + std::to_string(id) + " outside vocabulary");
  return tokens_[id];
}

std::size_t Vocabulary::add(std::string token) {
  if (const auto it = ids_.find(token); it != ids_.end()) return it->second;
  const std::size_t id = tokens_.size();
  ids_.emplace(token, id);
  tokens_.push_back(std::move(token));
  return id;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write vocabulary " + path.string());
  for (const auto& t : tokens_) out << t << '\n';
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot read vocabulary " + path.string());
  Vocabulary v;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    if (line_no < kNumSpecial) {
      if (line != v.tokens_[line_no])
        throw UserError(path.string() + ":" + std::to_string(line_no + 1) + ": expected special token " +
                        v.tokens_[line_no]);
    } else if (!line.empty()) {
      if (v.contains(line)) throw UserError(path.string() + ":" + std::to_string(line_no + 1) + ": duplicate token");
      v.add(line);
    }
    ++line_no;
  }
  return v;
}

std::vector<Document> parse_corpus(std::string_view text) {
  std::vector<Document> docs;
  Document current;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    std::string_view line = text.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
    const std::u32string decoded = decode_utf8(line);
    if (sentence_chars(decoded).empty()) {
      if (!current.empty()) docs.push_back(std::move(current));
      current.clear();
    } else {
      current.push_back(decoded);
    }
    start = end + 1;
  }
  if (!current.empty()) docs.push_back(std::move(current));
  return docs;
}

std::vector<Document> read_corpus(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot read corpus " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  try {
    return parse_corpus(ss.str());
  } catch (const UserError& e) {
    throw UserError(path.string() + ": " + e.what());
  }
}

std::u32string sentence_chars(std::u32string_view sentence) {
  std::u32string out;
  for (char32_t cp : sentence)
    if (!is_space(cp)) out.push_back(cp);
  return out;
}

namespace {

Vocabulary vocab_from_counts(const std::map<char32_t, std::size_t>& counts, std::size_t min_count,
                             std::size_t max_size) {
  if (counts.empty()) throw UserError("build_vocab: corpus contains no characters");
  std::vector<std::pair<char32_t, std::size_t>> ranked(counts.begin(), counts.end());
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocabulary v;
  for (const auto& [cp, count] : ranked) {
    if (count < min_count) continue;
    if (max_size != 0 && v.size() >= max_size) break;
    v.add(encode_utf8(cp));
  }
  return v;
}

void count_chars(std::string_view text, std::map<char32_t, std::size_t>& counts) {
  for (char32_t cp : decode_utf8(text))
    if (!is_space(cp)) ++counts[cp];
}

}  // namespace

Vocabulary build_vocab_from_text(std::string_view text, std::size_t min_count, std::size_t max_size) {
  std::map<char32_t, std::size_t> counts;
  count_chars(text, counts);
  return vocab_from_counts(counts, min_count, max_size);
}

Vocabulary build_vocab(const std::vector<std::filesystem::path>& corpus_paths, std::size_t min_count,
                       std::size_t max_size) {
  std::map<char32_t, std::size_t> counts;
  for (const auto& path : corpus_paths) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw UserError("cannot read corpus " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    count_chars(ss.str(), counts);
  }
  return vocab_from_counts(counts, min_count, max_size);
}

}  // namespace deskbert::data
