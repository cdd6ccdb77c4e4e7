#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "deskbert/data/example.hpp"
#include "deskbert/data/pipeline.hpp"
#include "deskbert/data/synthetic.hpp"
#include "deskbert/encoder/encoder.hpp"
#include "deskbert/harness/config.hpp"
#include "deskbert/harness/offset_copy.hpp"
#include "deskbert/harness/trainer.hpp"
#include "deskbert/numerics/gradcheck.hpp"

namespace deskbert::harness {

// Each command does the whole job of one CLI subcommand and returns its
// machine-readable summary. Failures surface as UserError (bad input) or
// InvariantError (internal inconsistency).

data::Vocabulary cmd_build_vocab(const std::vector<std::filesystem::path>& corpora, const std::filesystem::path& out,
                                 std::size_t min_count, std::size_t max_size);

// Writes `out` (JSON lines) and `out`.stats.json (counts, mask-rate histogram,
// config, seed). Uses config.data.{corpus, lexicon, vocab}; an empty lexicon
// path means every character is its own word.
data::PrepareStats cmd_prepare_data(const RunConfig& config, const std::filesystem::path& out);

PretrainResult cmd_pretrain(const RunConfig& config, const std::filesystem::path& out_dir,
                            const std::optional<std::filesystem::path>& resume_from = std::nullopt);

// Report with the checkpoint's config and seed embedded.
nlohmann::json cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& examples);

// Writes <out>/ablation.tsv and <out>/ablation.json.
AblationTable cmd_ablate(const RunConfig& config, const std::filesystem::path& out_dir);

struct GradcheckOutcome {
  posenc::Scheme scheme = posenc::Scheme::None;
  GradCheckReport report;
  bool passed = false;
};

inline constexpr double kGradcheckThreshold = 1e-4;

// Full model with dropout off on a fixed framed example of `length` tokens.
GradCheckReport gradcheck_model(const encoder::EncoderConfig& config, std::uint64_t seed, std::size_t length = 12,
                                const GradCheckOptions& options = {});
// d_model 64, 2 layers, 2 heads, V 128.
encoder::EncoderConfig desk_gradcheck_config(posenc::Scheme scheme);
std::vector<GradcheckOutcome> cmd_gradcheck(const std::vector<posenc::Scheme>& schemes, std::uint64_t seed);
nlohmann::json gradcheck_json(const std::vector<GradcheckOutcome>& outcomes, std::uint64_t seed);

// Synthetic toy-language corpus and lexicon files in `out_dir`.
data::SyntheticCorpus cmd_synth_corpus(const data::SyntheticOptions& options, const std::filesystem::path& out_dir);

}  // namespace deskbert::harness
