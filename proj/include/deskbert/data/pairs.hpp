#pragma once

#include <cstddef>
#include <random>
#include <vector>

#include "deskbert/data/segment.hpp"

namespace deskbert::data {

// Token ids of one sentence plus its word spans (local coordinates).
struct TokenizedSentence {
  std::vector<std::size_t> ids;
  std::vector<Span> words;

  friend bool operator==(const TokenizedSentence&, const TokenizedSentence&) = default;
};

using TokenizedDocument = std::vector<TokenizedSentence>;

struct SentencePair {
  TokenizedSentence a;
  TokenizedSentence b;
  int nsp_label = 0;
};

struct PairOptions {
  double positive_probability = 0.5;
  std::size_t max_negative_retries = 16;
};

// Drops trailing tokens of the longer sentence (A on ties) until
// |A| + |B| + 3 <= max_len; word spans are clipped to the kept prefix.
void truncate_pair(TokenizedSentence& a, TokenizedSentence& b, std::size_t max_len);

// One pair per sentence that has a successor in its document: with
// probability `positive_probability` B is that successor, otherwise a
// sentence drawn from a different document.
std::vector<SentencePair> build_pairs(const std::vector<TokenizedDocument>& documents, std::size_t max_len,
                                      std::mt19937_64& rng, const PairOptions& options = {});

// Pairs for the document at `doc_index` only (negatives still come from the
// other documents).
std::vector<SentencePair> build_pairs_for_document(const std::vector<TokenizedDocument>& documents,
                                                   std::size_t doc_index, std::size_t max_len,
                                                   std::mt19937_64& rng, const PairOptions& options = {});

}  // namespace deskbert::data
