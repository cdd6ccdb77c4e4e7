#include "deskbert/harness/metrics.hpp"

#include "deskbert/error.hpp"

namespace deskbert::harness {

using nlohmann::json;

json MetricsRecord::to_json() const {
  json j;
  j["step"] = step;
  j["loss"] = loss;
  j["mlm_loss"] = mlm_loss;
  j["nsp_loss"] = nsp_loss;
  j["mlm_accuracy"] = mlm_accuracy;
  j["lr"] = lr;
  j["skipped"] = skipped;
  j["wall_time"] = wall_time ? json(*wall_time) : json(nullptr);
  return j;
}

MetricsRecord MetricsRecord::from_json(const json& j) {
  MetricsRecord r;
  r.step = j.at("step").get<std::uint64_t>();
  r.loss = j.at("loss").get<double>();
  r.mlm_loss = j.at("mlm_loss").get<double>();
  r.nsp_loss = j.at("nsp_loss").get<double>();
  r.mlm_accuracy = j.at("mlm_accuracy").get<double>();
  r.lr = j.at("lr").get<double>();
  r.skipped = j.at("skipped").get<bool>();
  if (!j.at("wall_time").is_null()) r.wall_time = j.at("wall_time").get<double>();
  return r;
}

MetricsWriter::MetricsWriter(const std::filesystem::path& path, const json& header) : out_(path), path_(path) {
  if (!out_) throw UserError("cannot write metrics log " + path.string());
  out_ << json{{"header", header}}.dump() << '\n';
  out_.flush();
}

void MetricsWriter::write(const MetricsRecord& record) {
  if (last_step_ && record.step <= *last_step_)
    throw InvariantError("metrics step " + std::to_string(record.step) + " does not increase");
  last_step_ = record.step;
  out_ << record.to_json().dump() << '\n';
  out_.flush();
}

MetricsLog read_metrics(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw UserError("cannot read metrics log " + path.string());
  MetricsLog log;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (line_no == 1 && j.contains("header")) log.header = j["header"];
      else log.records.push_back(MetricsRecord::from_json(j));
    } catch (const json::exception& e) {
      throw UserError(path.string() + ": line " + std::to_string(line_no) + ": " + e.what());
    }
  }
  return log;
}

}  // namespace deskbert::harness
