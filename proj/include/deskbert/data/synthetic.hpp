#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "deskbert/data/segment.hpp"
#include "deskbert/data/vocab.hpp"

namespace deskbert::data {

// Toy language: each symbol has `branching` fixed successors and text is a
// random walk over that graph. Sentences continue the walk of the previous
// sentence in the same document, so the next-sentence task is learnable.
struct SyntheticOptions {
  std::size_t num_symbols = 200;
  std::size_t branching = 2;
  std::size_t num_documents = 512;
  std::size_t sentences_per_document = 8;
  std::size_t min_sentence_length = 8;
  std::size_t max_sentence_length = 24;
  std::uint64_t seed = 0;
};

// Symbol i is the code point U+4E00 + i.
char32_t synthetic_symbol(std::size_t index);

struct SyntheticCorpus {
  std::vector<Document> documents;
  // Bigrams (s, first successor of s): the frequent "words" of the language.
  Lexicon lexicon;
  std::vector<std::vector<std::size_t>> successors;
};

SyntheticCorpus make_synthetic_corpus(const SyntheticOptions& options);

// Corpus file text: one sentence per line, blank line between documents.
std::string corpus_text(const std::vector<Document>& documents);

// Specials followed by every symbol in index order.
Vocabulary synthetic_vocabulary(std::size_t num_symbols);

}  // namespace deskbert::data
