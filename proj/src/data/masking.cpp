#include "deskbert/data/masking.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <stdexcept>

#include "deskbert/error.hpp"

namespace deskbert::data {

std::string to_string(MaskStrategy s) { return s == MaskStrategy::Char ? "char" : "wwm"; }

MaskStrategy parse_strategy(std::string_view name) {
  if (name == "char") return MaskStrategy::Char;
  if (name == "wwm") return MaskStrategy::Wwm;
  throw std::invalid_argument("unknown masking strategy '" + std::string(name) + "' (expected char|wwm)");
}

std::size_t MaskingPlan::count(MaskAction action) const {
  return static_cast<std::size_t>(
      std::count_if(targets.begin(), targets.end(), [action](const MaskTarget& t) { return t.action == action; }));
}

namespace {

std::size_t stochastic_round(double x, std::mt19937_64& rng) {
  const double whole = std::floor(x);
  const double frac = x - whole;
  std::size_t n = static_cast<std::size_t>(whole);
  if (frac > 0.0 && std::uniform_real_distribution<double>(0.0, 1.0)(rng) < frac) ++n;
  return n;
}

}  // namespace

TargetBudget target_budget(std::size_t maskable, const MaskingRates& rates, std::mt19937_64& rng) {
  TargetBudget b;
  const double m = static_cast<double>(maskable);
  b.mask = stochastic_round(rates.mask * m, rng);
  b.random_replace = stochastic_round(rates.random_replace * m, rng);
  b.keep = stochastic_round(rates.keep * m, rng);
  if (b.total() == 0 && maskable >= 8) b.mask = 1;
  while (b.total() > maskable) {
    // Only reachable with rates summing above one.
    if (b.keep) --b.keep;
    else if (b.random_replace) --b.random_replace;
    else --b.mask;
  }
  return b;
}

MaskingPlan select_targets(std::size_t length, std::span<const Span> spans, MaskStrategy strategy,
                           std::mt19937_64& rng, const MaskingRates& rates) {
  MaskingPlan plan;
  plan.strategy = strategy;

  std::vector<Span> units;
  std::size_t maskable = 0;
  for (const Span& s : spans) {
    if (s.begin >= s.end || s.end > length)
      throw std::invalid_argument("select_targets: span [" + std::to_string(s.begin) + ", " + std::to_string(s.end) +
                                  ") outside sequence of length " + std::to_string(length));
    maskable += s.length();
    if (strategy == MaskStrategy::Char) {
      for (std::size_t p = s.begin; p < s.end; ++p) units.push_back({p, p + 1});
    } else {
      units.push_back(s);
    }
  }
  if (maskable == 0) return plan;

  const TargetBudget budget = target_budget(maskable, rates, rng);
  std::array<std::size_t, 3> remaining{budget.mask, budget.random_replace, budget.keep};
  constexpr std::array<MaskAction, 3> actions{MaskAction::Mask, MaskAction::RandomReplace, MaskAction::Keep};

  std::shuffle(units.begin(), units.end(), rng);
  for (const Span& unit : units) {
    if (remaining[0] + remaining[1] + remaining[2] == 0) break;
    // Pick among actions whose remaining budget fits the whole unit,
    // proportionally to that budget.
    std::size_t weight = 0;
    for (std::size_t a = 0; a < 3; ++a)
      if (remaining[a] >= unit.length()) weight += remaining[a];
    if (weight == 0) continue;
    std::size_t draw = std::uniform_int_distribution<std::size_t>(0, weight - 1)(rng);
    std::size_t chosen = 0;
    for (std::size_t a = 0; a < 3; ++a) {
      if (remaining[a] < unit.length()) continue;
      if (draw < remaining[a]) {
        chosen = a;
        break;
      }
      draw -= remaining[a];
    }
    remaining[chosen] -= unit.length();
    for (std::size_t p = unit.begin; p < unit.end; ++p) plan.targets.push_back({p, actions[chosen]});
  }
  std::sort(plan.targets.begin(), plan.targets.end(),
            [](const MaskTarget& a, const MaskTarget& b) { return a.position < b.position; });
  for (std::size_t i = 1; i < plan.targets.size(); ++i)
    if (plan.targets[i].position == plan.targets[i - 1].position)
      throw std::invalid_argument("select_targets: overlapping spans at position " +
                                  std::to_string(plan.targets[i].position));
  return plan;
}

MaskedSequence apply_masking(std::span<const std::size_t> token_ids, const MaskingPlan& plan, std::size_t vocab_size,
                             std::mt19937_64& rng) {
  MaskedSequence out;
  out.input_ids.assign(token_ids.begin(), token_ids.end());
  const bool can_replace = vocab_size > Vocabulary::kNumSpecial + 1;
  std::uniform_int_distribution<std::size_t> pick(Vocabulary::kNumSpecial,
                                                  std::max(vocab_size, Vocabulary::kNumSpecial + 1) - 1);
  for (const MaskTarget& t : plan.targets) {
    if (t.position >= token_ids.size())
      throw InvariantError("masking plan targets position " + std::to_string(t.position) + " beyond length " +
                           std::to_string(token_ids.size()));
    const std::size_t original = token_ids[t.position];
    if (Vocabulary::is_special(original))
      throw InvariantError("masking plan targets special token at position " + std::to_string(t.position));
    switch (t.action) {
      case MaskAction::Mask:
        out.input_ids[t.position] = Vocabulary::kMask;
        break;
      case MaskAction::RandomReplace:
        if (can_replace) {
          std::size_t id;
          do id = pick(rng);
          while (id == original);
          out.input_ids[t.position] = id;
        }
        break;
      case MaskAction::Keep:
        break;
    }
    out.positions.push_back(t.position);
    out.labels.push_back(original);
  }
  return out;
}

MaskedSequence apply_masking(std::span<const std::size_t> token_ids, const MaskingPlan& plan,
                             const Vocabulary& vocab, std::mt19937_64& rng) {
  return apply_masking(token_ids, plan, vocab.size(), rng);
}

}  // namespace deskbert::data
