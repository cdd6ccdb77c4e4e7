#include "deskbert/data/synthetic.hpp"

#include <algorithm>
#include <numeric>
#include <random>
#include <stdexcept>

#include "deskbert/data/utf8.hpp"

namespace deskbert::data {

char32_t synthetic_symbol(std::size_t index) { return static_cast<char32_t>(0x4E00 + index); }

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& o) {
  if (o.num_symbols < 2 || o.num_symbols > 20000) throw std::invalid_argument("num_symbols must be in [2, 20000]");
  if (o.branching < 1 || o.branching > o.num_symbols) throw std::invalid_argument("branching must be in [1, num_symbols]");
  if (o.min_sentence_length < 1 || o.min_sentence_length > o.max_sentence_length)
    throw std::invalid_argument("sentence length bounds must satisfy 1 <= min <= max");

  std::mt19937_64 rng(o.seed);
  SyntheticCorpus corpus;
  std::vector<std::size_t> all(o.num_symbols);
  std::iota(all.begin(), all.end(), std::size_t{0});
  corpus.successors.resize(o.num_symbols);
  for (std::size_t s = 0; s < o.num_symbols; ++s) {
    std::shuffle(all.begin(), all.end(), rng);
    corpus.successors[s].assign(all.begin(), all.begin() + static_cast<std::ptrdiff_t>(o.branching));
    std::u32string word{synthetic_symbol(s), synthetic_symbol(corpus.successors[s][0])};
    corpus.lexicon.add(word);
  }

  std::uniform_int_distribution<std::size_t> start(0, o.num_symbols - 1);
  std::uniform_int_distribution<std::size_t> branch(0, o.branching - 1);
  std::uniform_int_distribution<std::size_t> length(o.min_sentence_length, o.max_sentence_length);
  for (std::size_t d = 0; d < o.num_documents; ++d) {
    Document doc;
    std::size_t cur = start(rng);
    for (std::size_t k = 0; k < o.sentences_per_document; ++k) {
      std::u32string sentence;
      const std::size_t n = length(rng);
      for (std::size_t i = 0; i < n; ++i) {
        sentence.push_back(synthetic_symbol(cur));
        cur = corpus.successors[cur][branch(rng)];
      }
      doc.push_back(std::move(sentence));
    }
    corpus.documents.push_back(std::move(doc));
  }
  return corpus;
}

std::string corpus_text(const std::vector<Document>& documents) {
  std::string out;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    if (d) out += '\n';
    for (const auto& s : documents[d]) {
      out += encode_utf8(s);
      out += '\n';
    }
  }
  return out;
}

Vocabulary synthetic_vocabulary(std::size_t num_symbols) {
  Vocabulary v;
  for (std::size_t i = 0; i < num_symbols; ++i) v.add(encode_utf8(synthetic_symbol(i)));
  return v;
}

}  // namespace deskbert::data
