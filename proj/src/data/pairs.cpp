#include "deskbert/data/pairs.hpp"

#include <stdexcept>

#include "deskbert/data/example.hpp"
#include "deskbert/error.hpp"

namespace deskbert::data {

namespace {

void clip(TokenizedSentence& s, std::size_t keep) {
  s.ids.resize(keep);
  std::vector<Span> words;
  for (Span w : s.words) {
    if (w.begin >= keep) break;
    w.end = std::min(w.end, keep);
    words.push_back(w);
  }
  s.words = std::move(words);
}

}  // namespace

void truncate_pair(TokenizedSentence& a, TokenizedSentence& b, std::size_t max_len) {
  if (max_len < 5) throw std::invalid_argument("sequence length must leave room for [CLS], [SEP], [SEP] and tokens");
  const std::size_t budget = max_len - 3;
  std::size_t la = a.ids.size(), lb = b.ids.size();
  while (la + lb > budget) {
    if (la >= lb) --la;
    else --lb;
  }
  clip(a, la);
  clip(b, lb);
}

std::vector<SentencePair> build_pairs_for_document(const std::vector<TokenizedDocument>& documents,
                                                   std::size_t doc_index, std::size_t max_len,
                                                   std::mt19937_64& rng, const PairOptions& options) {
  const TokenizedDocument& doc = documents.at(doc_index);
  std::bernoulli_distribution positive(options.positive_probability);
  std::vector<SentencePair> pairs;
  for (std::size_t i = 0; i + 1 < doc.size(); ++i) {
    SentencePair pair;
    pair.a = doc[i];
    if (positive(rng)) {
      pair.b = doc[i + 1];
      pair.nsp_label = kIsNext;
    } else {
      pair.nsp_label = kNotNext;
      bool found = false;
      for (std::size_t attempt = 0; attempt < options.max_negative_retries && !found; ++attempt) {
        if (documents.size() >= 2) {
          std::size_t other = std::uniform_int_distribution<std::size_t>(0, documents.size() - 2)(rng);
          if (other >= doc_index) ++other;
          const auto& od = documents[other];
          if (od.empty()) continue;
          pair.b = od[std::uniform_int_distribution<std::size_t>(0, od.size() - 1)(rng)];
          found = true;
        } else {
          // Single document: any sentence other than A and its successor.
          const std::size_t j = std::uniform_int_distribution<std::size_t>(0, doc.size() - 1)(rng);
          if (j == i || j == i + 1) continue;
          pair.b = doc[j];
          found = true;
        }
      }
      if (!found)
        throw UserError("build_pairs: could not draw a negative sentence after " +
                        std::to_string(options.max_negative_retries) + " attempts (need at least two documents)");
    }
    truncate_pair(pair.a, pair.b, max_len);
    if (pair.a.ids.empty() || pair.b.ids.empty()) continue;
    pairs.push_back(std::move(pair));
  }
  return pairs;
}

std::vector<SentencePair> build_pairs(const std::vector<TokenizedDocument>& documents, std::size_t max_len,
                                      std::mt19937_64& rng, const PairOptions& options) {
  std::vector<SentencePair> pairs;
  for (std::size_t d = 0; d < documents.size(); ++d) {
    auto doc_pairs = build_pairs_for_document(documents, d, max_len, rng, options);
    pairs.insert(pairs.end(), std::make_move_iterator(doc_pairs.begin()), std::make_move_iterator(doc_pairs.end()));
  }
  return pairs;
}

}  // namespace deskbert::data
