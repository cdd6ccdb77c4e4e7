#include "deskbert/harness/checkpoint.hpp"

#include <bit>
#include <fstream>
#include <iterator>

#include "deskbert/error.hpp"

namespace deskbert::harness {

namespace fs = std::filesystem;
using nlohmann::json;

double narrow_to_float(double x) { return static_cast<double>(static_cast<float>(x)); }

namespace {

template <typename U>
void put_le(std::string& out, U bits) {
  for (std::size_t b = 0; b < sizeof(U); ++b) out.push_back(static_cast<char>((bits >> (8 * b)) & 0xff));
}

template <typename U>
U get_le(const std::string& in, std::size_t at) {
  U bits = 0;
  for (std::size_t b = 0; b < sizeof(U); ++b)
    bits |= static_cast<U>(static_cast<unsigned char>(in[at + b])) << (8 * b);
  return bits;
}

void put_f32(std::string& out, double x) { put_le(out, std::bit_cast<std::uint32_t>(static_cast<float>(x))); }
void put_f64(std::string& out, double x) { put_le(out, std::bit_cast<std::uint64_t>(x)); }

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw UserError("checkpoint: cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::string& bytes) {
  std::ofstream out(path, std::ios::binary);
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!out) throw UserError("checkpoint: cannot write " + path.string());
}

}  // namespace

void save_checkpoint(const fs::path& dir, const RunConfig& config, const ParameterStore& params,
                     const optim::OptimizerState& state, std::uint64_t step, const json& metrics) {
  fs::create_directories(dir);
  if (state.m.size() != params.size()) throw InvariantError("checkpoint: optimizer state does not match parameters");
  json tensors = json::array();
  std::string payload, opt;
  put_le(opt, state.step);
  std::size_t offset = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& p = params[i];
    tensors.push_back({{"name", p.name}, {"shape", p.value.shape()}, {"offset", offset}, {"exempt", p.exempt}});
    offset += p.value.size();
    for (double x : p.value.values()) put_f32(payload, x);
    for (double x : p.value.values()) put_f64(opt, x);
    for (double x : state.m[i].values()) put_f64(opt, x);
    for (double x : state.v[i].values()) put_f64(opt, x);
  }
  json manifest;
  manifest["format_version"] = kCheckpointFormatVersion;
  manifest["config"] = to_json(config);
  manifest["seed"] = config.seed;
  manifest["step"] = step;
  manifest["metrics"] = metrics;
  manifest["tensors"] = tensors;
  manifest["total_elements"] = offset;
  manifest["optimizer"] = {{"kind", optim::to_string(state.config.kind)}, {"step", state.step}};
  write_file(dir / "params.bin", payload);
  write_file(dir / "optstate.bin", opt);
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
}

Checkpoint load_checkpoint(const fs::path& dir) {
  Checkpoint ck;
  try {
    ck.manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::parse_error& e) {
    throw UserError("checkpoint: malformed manifest in " + dir.string() + ": " + e.what());
  }
  const json& m = ck.manifest;
  if (!m.contains("format_version") || m["format_version"] != kCheckpointFormatVersion)
    throw UserError("checkpoint: unsupported format version in " + dir.string() + " (expected " +
                    std::to_string(kCheckpointFormatVersion) + ")");
  try {
    ck.config = run_config_from_json(m.at("config"));
    ck.step = m.at("step").get<std::uint64_t>();
    std::size_t total = 0;
    for (const auto& t : m.at("tensors")) {
      ck.names.push_back(t.at("name").get<std::string>());
      const Shape shape = t.at("shape").get<Shape>();
      if (t.at("offset").get<std::size_t>() != total)
        throw UserError("checkpoint: tensor " + ck.names.back() + " has an inconsistent offset");
      ck.stored.emplace_back(shape, 0.0);
      total += ck.stored.back().size();
    }
    const std::string payload = read_file(dir / "params.bin");
    if (payload.size() != total * 4)
      throw UserError("checkpoint: params.bin holds " + std::to_string(payload.size()) + " bytes, manifest expects " +
                      std::to_string(total * 4));
    const std::string opt = read_file(dir / "optstate.bin");
    if (opt.size() != 8 + total * 24)
      throw UserError("checkpoint: optstate.bin holds " + std::to_string(opt.size()) + " bytes, manifest expects " +
                      std::to_string(8 + total * 24));
    std::size_t at = 0;
    for (auto& t : ck.stored)
      for (double& x : t.values()) {
        x = std::bit_cast<float>(get_le<std::uint32_t>(payload, at));
        at += 4;
      }
    ck.optimizer.config = ck.config.optimizer;
    ck.optimizer.step = get_le<std::uint64_t>(opt, 0);
    at = 8;
    auto next = [&](const Shape& shape) {
      Tensor t(shape, 0.0);
      for (double& x : t.values()) {
        x = std::bit_cast<double>(get_le<std::uint64_t>(opt, at));
        at += 8;
      }
      return t;
    };
    for (const auto& t : ck.stored) {
      ck.master.push_back(next(t.shape()));
      ck.optimizer.m.push_back(next(t.shape()));
      ck.optimizer.v.push_back(next(t.shape()));
    }
  } catch (const json::exception& e) {
    throw UserError("checkpoint: malformed manifest in " + dir.string() + ": " + e.what());
  } catch (const std::invalid_argument& e) {
    throw UserError("checkpoint: " + dir.string() + ": " + e.what());
  }
  return ck;
}

void restore_parameters(const Checkpoint& ck, ParameterStore& params, bool use_master) {
  if (params.size() != ck.names.size())
    throw UserError("checkpoint holds " + std::to_string(ck.names.size()) + " tensors, model expects " +
                    std::to_string(params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (params[i].name != ck.names[i])
      throw UserError("checkpoint tensor " + std::to_string(i) + " is '" + ck.names[i] + "', model expects '" +
                      params[i].name + "'");
    if (!params[i].value.same_shape(ck.stored[i]))
      throw UserError("checkpoint tensor '" + ck.names[i] + "' has shape " + shape_string(ck.stored[i].shape()) +
                      ", model expects " + shape_string(params[i].value.shape()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) params[i].value = use_master ? ck.master[i] : ck.stored[i];
}

}  // namespace deskbert::harness
