#include "deskbert/data/examples_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include <json.hpp>

#include "deskbert/data/vocab.hpp"
#include "deskbert/error.hpp"

namespace deskbert::data {

using nlohmann::json;

std::string encode_example(const PretrainExample& e) {
  json j = json::object();
  j["tokens"] = e.tokens;
  j["segments"] = e.segments;
  j["predict_positions"] = e.predict_positions;
  j["predict_labels"] = e.predict_labels;
  j["nsp_label"] = e.nsp_label;
  return j.dump();
}

namespace {

std::vector<std::size_t> index_array(const json& j, const char* field, std::size_t line_no) {
  const auto it = j.find(field);
  if (it == j.end()) throw UserError("line " + std::to_string(line_no) + ": missing field '" + field + "'");
  if (!it->is_array()) throw UserError("line " + std::to_string(line_no) + ": field '" + field + "' is not an array");
  std::vector<std::size_t> out;
  out.reserve(it->size());
  for (const auto& v : *it) {
    if (!v.is_number_unsigned())
      throw UserError("line " + std::to_string(line_no) + ": field '" + field + "' holds a non-index value");
    out.push_back(v.get<std::size_t>());
  }
  return out;
}

}  // namespace

PretrainExample decode_example(std::string_view line, std::size_t line_no) {
  json j;
  try {
    j = json::parse(line);
  } catch (const json::parse_error& e) {
    throw UserError("line " + std::to_string(line_no) + ": malformed JSON (" + e.what() + ")");
  }
  if (!j.is_object()) throw UserError("line " + std::to_string(line_no) + ": expected a JSON object");
  for (const auto& [key, _] : j.items())
    if (key != "tokens" && key != "segments" && key != "predict_positions" && key != "predict_labels" &&
        key != "nsp_label")
      throw UserError("line " + std::to_string(line_no) + ": unexpected field '" + key + "'");
  PretrainExample e;
  e.tokens = index_array(j, "tokens", line_no);
  e.segments = index_array(j, "segments", line_no);
  e.predict_positions = index_array(j, "predict_positions", line_no);
  e.predict_labels = index_array(j, "predict_labels", line_no);
  const auto nsp = j.find("nsp_label");
  if (nsp == j.end() || !nsp->is_number_integer())
    throw UserError("line " + std::to_string(line_no) + ": missing or non-integer 'nsp_label'");
  e.nsp_label = nsp->get<int>();
  if (e.nsp_label != kIsNext && e.nsp_label != kNotNext && e.nsp_label != kNoNspLabel)
    throw UserError("line " + std::to_string(line_no) + ": nsp_label must be 0, 1 or -1");
  if (e.tokens.size() != e.segments.size())
    throw UserError("line " + std::to_string(line_no) + ": tokens and segments differ in length");
  if (e.predict_positions.size() != e.predict_labels.size())
    throw UserError("line " + std::to_string(line_no) + ": predict_positions and predict_labels differ in length");
  return e;
}

void write_examples(std::ostream& out, const std::vector<PretrainExample>& examples) {
  for (const auto& e : examples) out << encode_example(e) << '\n';
}

void write_examples(const std::filesystem::path& path, const std::vector<PretrainExample>& examples) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw UserError("cannot write examples to " + path.string());
  write_examples(out, examples);
  if (!out) throw UserError("error while writing " + path.string());
}

std::vector<PretrainExample> read_examples(std::istream& in) {
  std::vector<PretrainExample> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    out.push_back(decode_example(line, line_no));
  }
  return out;
}

std::vector<PretrainExample> read_examples(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("cannot read examples from " + path.string());
  try {
    return read_examples(in);
  } catch (const UserError& e) {
    throw UserError(path.string() + ": " + e.what());
  }
}

void validate_example(const PretrainExample& e, std::size_t vocab_size) {
  auto fail = [](const std::string& what) { throw UserError("invalid example: " + what); };
  if (e.tokens.size() != e.segments.size()) fail("tokens and segments differ in length");
  if (e.predict_positions.size() != e.predict_labels.size()) fail("label count differs from position count");
  for (std::size_t i = 0; i < e.tokens.size(); ++i) {
    if (e.tokens[i] >= vocab_size) fail("token id " + std::to_string(e.tokens[i]) + " out of range at " + std::to_string(i));
    if (e.segments[i] > 1) fail("segment id must be 0 or 1");
  }
  for (std::size_t k = 0; k < e.predict_positions.size(); ++k) {
    const std::size_t p = e.predict_positions[k];
    if (p >= e.tokens.size()) fail("prediction position out of range");
    if (k > 0 && p <= e.predict_positions[k - 1]) fail("prediction positions not strictly increasing");
    const std::size_t t = e.tokens[p];
    if (t == Vocabulary::kCls || t == Vocabulary::kSep || t == Vocabulary::kPad)
      fail("prediction position " + std::to_string(p) + " points at a special token");
    if (e.predict_labels[k] >= vocab_size) fail("label out of range");
  }
  if (e.nsp_label == kNoNspLabel) return;
  // Sentence-pair framing: [CLS] A [SEP] B [SEP], segment switches after the
  // first [SEP].
  if (e.tokens.empty() || e.tokens.front() != Vocabulary::kCls || e.tokens.back() != Vocabulary::kSep)
    fail("pair example must start with [CLS] and end with [SEP]");
  std::size_t first_sep = 1;
  while (first_sep < e.tokens.size() && e.tokens[first_sep] != Vocabulary::kSep) ++first_sep;
  for (std::size_t i = 0; i < e.tokens.size(); ++i)
    if (e.segments[i] != (i <= first_sep ? 0u : 1u)) fail("segment ids do not switch at the first [SEP]");
}

}  // namespace deskbert::data
