#pragma once

#include <cstddef>
#include <vector>

namespace deskbert::data {

inline constexpr int kIsNext = 0;
inline constexpr int kNotNext = 1;
// Examples without a sentence-pair objective (e.g. synthetic probes).
inline constexpr int kNoNspLabel = -1;

// One serialized training sample: [CLS] A [SEP] B [SEP] with the MLM targets
// and the next-sentence label.
struct PretrainExample {
  std::vector<std::size_t> tokens;
  std::vector<std::size_t> segments;
  std::vector<std::size_t> predict_positions;
  std::vector<std::size_t> predict_labels;
  int nsp_label = kNoNspLabel;

  std::size_t length() const { return tokens.size(); }
  friend bool operator==(const PretrainExample&, const PretrainExample&) = default;
};

}  // namespace deskbert::data
