#pragma once

#include <cstddef>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "deskbert/data/segment.hpp"
#include "deskbert/data/vocab.hpp"

namespace deskbert::data {

enum class MaskStrategy { Char, Wwm };
enum class MaskAction { Mask, RandomReplace, Keep };

std::string to_string(MaskStrategy s);
MaskStrategy parse_strategy(std::string_view name);

// Fractions of maskable positions per action. The defaults select 15% of
// positions as prediction targets split 12 : 1.5 : 1.5.
struct MaskingRates {
  double mask = 0.12;
  double random_replace = 0.015;
  double keep = 0.015;

  double total() const { return mask + random_replace + keep; }
};

struct MaskTarget {
  std::size_t position = 0;
  MaskAction action = MaskAction::Mask;
  friend bool operator==(const MaskTarget&, const MaskTarget&) = default;
};

struct MaskingPlan {
  MaskStrategy strategy = MaskStrategy::Char;
  std::vector<MaskTarget> targets;  // strictly increasing positions

  std::size_t count(MaskAction action) const;
};

// Per-action target counts for `maskable` positions: each rate * maskable is
// rounded stochastically (floor plus a Bernoulli draw on the fraction), so
// expected counts match the rates exactly; at least one target when
// maskable >= 8.
struct TargetBudget {
  std::size_t mask = 0;
  std::size_t random_replace = 0;
  std::size_t keep = 0;
  std::size_t total() const { return mask + random_replace + keep; }
};
TargetBudget target_budget(std::size_t maskable, const MaskingRates& rates, std::mt19937_64& rng);

// `spans` are the maskable word spans in sequence coordinates (positions
// outside every span, such as [CLS]/[SEP], are never selected). CHAR treats
// every position on its own; WWM draws whole spans and gives every
// character of a span the same action, skipping spans that do not fit the
// remaining budget of any action.
MaskingPlan select_targets(std::size_t length, std::span<const Span> spans, MaskStrategy strategy,
                           std::mt19937_64& rng, const MaskingRates& rates = {});

struct MaskedSequence {
  std::vector<std::size_t> input_ids;
  std::vector<std::size_t> positions;
  std::vector<std::size_t> labels;
};

// MASK -> [MASK]; RANDOM_REPLACE -> uniform non-special id other than the
// original; KEEP -> unchanged. Labels are the original ids. A target on a
// special token throws InvariantError.
MaskedSequence apply_masking(std::span<const std::size_t> token_ids, const MaskingPlan& plan,
                             const Vocabulary& vocab, std::mt19937_64& rng);
MaskedSequence apply_masking(std::span<const std::size_t> token_ids, const MaskingPlan& plan, std::size_t vocab_size,
                             std::mt19937_64& rng);

}  // namespace deskbert::data
