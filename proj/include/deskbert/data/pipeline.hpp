#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

#include <json.hpp>

#include "deskbert/data/example.hpp"
#include "deskbert/data/masking.hpp"
#include "deskbert/data/pairs.hpp"
#include "deskbert/data/segment.hpp"
#include "deskbert/data/vocab.hpp"

namespace deskbert::data {

TokenizedDocument tokenize_document(const Document& doc, const Vocabulary& vocab, const WordSegmenter& segmenter);
std::vector<TokenizedDocument> tokenize_corpus(const std::vector<Document>& docs, const Vocabulary& vocab,
                                               const WordSegmenter& segmenter);

struct PipelineOptions {
  std::size_t max_seq_len = 128;
  MaskStrategy strategy = MaskStrategy::Char;
  MaskingRates rates;
  PairOptions pairs;
  std::uint64_t seed = 0;
};

// Counts over a prepared example set. Rates are relative to maskable
// (non-special) positions.
struct PrepareStats {
  static constexpr std::size_t kHistogramBins = 20;
  static constexpr double kHistogramWidth = 0.01;  // per-example MASK rate bins

  std::size_t examples = 0;
  std::size_t tokens = 0;
  std::size_t maskable = 0;
  std::size_t mask = 0;
  std::size_t random_replace = 0;
  std::size_t keep = 0;
  std::size_t nsp_positive = 0;
  std::size_t wwm_violations = 0;
  std::array<std::size_t, kHistogramBins> mask_rate_histogram{};

  double mask_rate() const { return maskable ? double(mask) / double(maskable) : 0.0; }
  double random_rate() const { return maskable ? double(random_replace) / double(maskable) : 0.0; }
  double keep_rate() const { return maskable ? double(keep) / double(maskable) : 0.0; }
  double nsp_positive_fraction() const { return examples ? double(nsp_positive) / double(examples) : 0.0; }
  nlohmann::json to_json() const;
};

// [CLS] A [SEP] B [SEP] with segment ids, then masking. Word spans of the
// pair restricted to non-special tokens are the masking units.
PretrainExample frame_and_mask(const SentencePair& pair, MaskStrategy strategy, const MaskingRates& rates,
                               std::size_t vocab_size, std::mt19937_64& rng, PrepareStats* stats = nullptr);

// Document d pairs with the stream mix_seed(mix_seed(seed, d), 0) and masks
// with mix_seed(mix_seed(seed, d), 1), so CHAR and WWM outputs share every
// non-masking field.
std::vector<PretrainExample> prepare_examples(const std::vector<TokenizedDocument>& docs, std::size_t vocab_size,
                                              const PipelineOptions& options, PrepareStats* stats = nullptr);

}  // namespace deskbert::data
