#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <vector>

#include <json.hpp>

namespace deskbert::harness {

struct MetricsRecord {
  std::uint64_t step = 0;
  double loss = 0.0;
  double mlm_loss = 0.0;
  double nsp_loss = 0.0;
  double mlm_accuracy = 0.0;
  double lr = 0.0;
  bool skipped = false;
  std::optional<double> wall_time;  // null unless wall-time logging is on

  nlohmann::json to_json() const;
  static MetricsRecord from_json(const nlohmann::json& j);
  friend bool operator==(const MetricsRecord&, const MetricsRecord&) = default;
};

// JSON-lines log. The first line is {"header": {"config": ..., "seed": ...}},
// every further line one MetricsRecord with strictly increasing step.
class MetricsWriter {
 public:
  MetricsWriter(const std::filesystem::path& path, const nlohmann::json& header);
  void write(const MetricsRecord& record);

 private:
  std::ofstream out_;
  std::filesystem::path path_;
  std::optional<std::uint64_t> last_step_;
};

struct MetricsLog {
  nlohmann::json header;
  std::vector<MetricsRecord> records;
};

MetricsLog read_metrics(const std::filesystem::path& path);

}  // namespace deskbert::harness
