#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <json.hpp>

#include "deskbert/data/example.hpp"
#include "deskbert/data/masking.hpp"
#include "deskbert/harness/config.hpp"
#include "deskbert/posenc/posenc.hpp"

namespace deskbert::harness {

// Offset-copy probe. A sequence is [CLS] s_1 .. s_{L-2} [SEP] over
// `num_symbols` random symbols. Marked positions (chosen by the masking
// strategy over synthetic words) become [MASK]; the label at marked position
// p is the original symbol at p + offset, kept only when that position is an
// unmarked symbol. Content carries no information about the answer, so the
// model must locate it through positional signals.
struct OffsetCopyTask {
  std::size_t num_symbols = 16;
  long offset = -3;
  double mark_rate = 0.15;
  data::MaskStrategy strategy = data::MaskStrategy::Char;

  std::size_t vocab_size() const;
};

data::PretrainExample make_offset_copy_example(const OffsetCopyTask& task, std::size_t length, std::mt19937_64& rng);
std::vector<data::PretrainExample> make_offset_copy_set(const OffsetCopyTask& task, std::size_t length,
                                                        std::size_t count, std::uint64_t seed);

struct CellResult {
  posenc::Scheme scheme = posenc::Scheme::Frpe;
  data::MaskStrategy strategy = data::MaskStrategy::Char;
  std::size_t max_position = 0;
  double final_loss = 0.0;
  double accuracy_train_length = 0.0;
  std::optional<double> accuracy_eval_length;  // empty when out of range
  std::string eval_status;                     // "ok" or the failure message

  std::string label(std::size_t sl_train) const;
  nlohmann::json to_json() const;
};

// Trains one cell of the grid at ablation.sl_train and scores it at both
// lengths. `max_position` overrides the PAPE table size (default
// ablation.pape_max_position, or sl_train when that is 0).
CellResult run_offset_copy_cell(const RunConfig& config, posenc::Scheme scheme, data::MaskStrategy strategy,
                                std::optional<std::size_t> max_position = std::nullopt);

struct AblationTable {
  std::vector<CellResult> cells;
  nlohmann::json to_json(const RunConfig& config) const;
  std::string to_tsv(const RunConfig& config) const;
};

AblationTable run_ablation(const RunConfig& config);

}  // namespace deskbert::harness
