#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "deskbert/data/example.hpp"

namespace deskbert::data {

// JSON-lines, one example per line with exactly the fields tokens,
// segments, predict_positions, predict_labels, nsp_label.
std::string encode_example(const PretrainExample& example);
// Throws UserError naming `line_no` on malformed input.
PretrainExample decode_example(std::string_view line, std::size_t line_no);

void write_examples(std::ostream& out, const std::vector<PretrainExample>& examples);
void write_examples(const std::filesystem::path& path, const std::vector<PretrainExample>& examples);
std::vector<PretrainExample> read_examples(std::istream& in);
std::vector<PretrainExample> read_examples(const std::filesystem::path& path);

// Structural checks: framing, segment boundary, increasing positions that
// avoid specials, label/position counts.
void validate_example(const PretrainExample& example, std::size_t vocab_size);

}  // namespace deskbert::data
