#include "deskbert/data/pipeline.hpp"

#include <algorithm>

#include "deskbert/rng.hpp"

namespace deskbert::data {

TokenizedDocument tokenize_document(const Document& doc, const Vocabulary& vocab, const WordSegmenter& segmenter) {
  TokenizedDocument out;
  for (const auto& sentence : doc) {
    const std::u32string chars = sentence_chars(sentence);
    if (chars.empty()) continue;
    TokenizedSentence s;
    s.ids.reserve(chars.size());
    for (char32_t c : chars) s.ids.push_back(vocab.id_of(c));
    s.words = segmenter.segment(chars);
    out.push_back(std::move(s));
  }
  return out;
}

std::vector<TokenizedDocument> tokenize_corpus(const std::vector<Document>& docs, const Vocabulary& vocab,
                                               const WordSegmenter& segmenter) {
  std::vector<TokenizedDocument> out;
  out.reserve(docs.size());
  for (const auto& d : docs) out.push_back(tokenize_document(d, vocab, segmenter));
  return out;
}

nlohmann::json PrepareStats::to_json() const {
  nlohmann::json j;
  j["examples"] = examples;
  j["tokens"] = tokens;
  j["maskable"] = maskable;
  j["mask"] = mask;
  j["random_replace"] = random_replace;
  j["keep"] = keep;
  j["mask_rate"] = mask_rate();
  j["random_rate"] = random_rate();
  j["keep_rate"] = keep_rate();
  j["nsp_positive"] = nsp_positive;
  j["nsp_positive_fraction"] = nsp_positive_fraction();
  j["wwm_violations"] = wwm_violations;
  j["mask_rate_histogram"] = {{"bin_width", kHistogramWidth}, {"counts", mask_rate_histogram}};
  return j;
}

namespace {

// Word spans shifted to sequence coordinates, with special ids ([UNK])
// cut out so they are never targets.
void append_units(const TokenizedSentence& s, std::size_t offset, std::vector<Span>& units) {
  for (const Span& w : s.words) {
    std::size_t begin = w.begin;
    for (std::size_t p = w.begin; p <= w.end; ++p) {
      if (p == w.end || Vocabulary::is_special(s.ids[p])) {
        if (p > begin) units.push_back({begin + offset, p + offset});
        begin = p + 1;
      }
    }
  }
}

}  // namespace

PretrainExample frame_and_mask(const SentencePair& pair, MaskStrategy strategy, const MaskingRates& rates,
                               std::size_t vocab_size, std::mt19937_64& rng, PrepareStats* stats) {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> segments;
  tokens.reserve(pair.a.ids.size() + pair.b.ids.size() + 3);
  tokens.push_back(Vocabulary::kCls);
  tokens.insert(tokens.end(), pair.a.ids.begin(), pair.a.ids.end());
  tokens.push_back(Vocabulary::kSep);
  segments.assign(tokens.size(), 0);
  tokens.insert(tokens.end(), pair.b.ids.begin(), pair.b.ids.end());
  tokens.push_back(Vocabulary::kSep);
  segments.resize(tokens.size(), 1);

  std::vector<Span> units;
  append_units(pair.a, 1, units);
  append_units(pair.b, pair.a.ids.size() + 2, units);

  const MaskingPlan plan = select_targets(tokens.size(), units, strategy, rng, rates);
  MaskedSequence masked = apply_masking(tokens, plan, vocab_size, rng);

  PretrainExample e;
  e.tokens = std::move(masked.input_ids);
  e.segments = std::move(segments);
  e.predict_positions = std::move(masked.positions);
  e.predict_labels = std::move(masked.labels);
  e.nsp_label = pair.nsp_label;

  if (stats) {
    std::size_t maskable = 0;
    for (const Span& u : units) maskable += u.length();
    ++stats->examples;
    stats->tokens += e.tokens.size();
    stats->maskable += maskable;
    const std::size_t n_mask = plan.count(MaskAction::Mask);
    stats->mask += n_mask;
    stats->random_replace += plan.count(MaskAction::RandomReplace);
    stats->keep += plan.count(MaskAction::Keep);
    if (pair.nsp_label == kIsNext) ++stats->nsp_positive;
    if (maskable > 0) {
      const double rate = double(n_mask) / double(maskable);
      const auto bin = std::min<std::size_t>(static_cast<std::size_t>(rate / PrepareStats::kHistogramWidth),
                                             PrepareStats::kHistogramBins - 1);
      ++stats->mask_rate_histogram[bin];
    }
    if (strategy == MaskStrategy::Wwm) {
      // Every unit must be either fully targeted or untouched.
      for (const Span& u : units) {
        std::size_t hit = 0;
        for (const MaskTarget& t : plan.targets)
          if (t.position >= u.begin && t.position < u.end) ++hit;
        if (hit != 0 && hit != u.length()) ++stats->wwm_violations;
      }
    }
  }
  return e;
}

std::vector<PretrainExample> prepare_examples(const std::vector<TokenizedDocument>& docs, std::size_t vocab_size,
                                              const PipelineOptions& options, PrepareStats* stats) {
  std::vector<PretrainExample> out;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    const std::uint64_t doc_seed = mix_seed(options.seed, d);
    std::mt19937_64 pair_rng(mix_seed(doc_seed, 0));
    std::mt19937_64 mask_rng(mix_seed(doc_seed, 1));
    for (const SentencePair& pair : build_pairs_for_document(docs, d, options.max_seq_len, pair_rng, options.pairs))
      out.push_back(frame_and_mask(pair, options.strategy, options.rates, vocab_size, mask_rng, stats));
  }
  return out;
}

}  // namespace deskbert::data
