#include <string>

#include "binary_io.hpp"
#include "contex/model.hpp"

namespace contex {

std::vector<std::uint8_t> serialize_checkpoint(const ModelParams& params) {
  detail::ByteWriter w;
  w.magic("CTXC");
  w.put<std::uint32_t>(kCheckpointVersion);
  const auto fields = params.arch().fields();
  w.put<std::uint32_t>(static_cast<std::uint32_t>(fields.size()));
  for (auto f : fields) w.put<std::uint32_t>(f);
  w.put<std::uint32_t>(static_cast<std::uint32_t>(params.tensors().size()));
  for (const auto& t : params.tensors()) {
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rows()));
    w.put<std::uint32_t>(static_cast<std::uint32_t>(t.cols()));
  }
  for (const auto& t : params.tensors()) {
    for (Eigen::Index i = 0; i < t.size(); ++i) w.put<double>(t.data()[i]);
  }
  return std::move(w.bytes());
}

ModelParams deserialize_checkpoint(std::span<const std::uint8_t> bytes) {
  detail::ByteReader r(bytes, "checkpoint");
  r.expect_magic("CTXC");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw ValidationError("unsupported checkpoint version " + std::to_string(version));
  }
  std::vector<std::uint32_t> fields(r.get<std::uint32_t>());
  for (auto& f : fields) f = r.get<std::uint32_t>();
  const ArchSpec arch = ArchSpec::from_fields(fields);

  const auto expected = tensor_shapes(arch);
  const auto count = r.get<std::uint32_t>();
  if (count != expected.size()) {
    throw ValidationError("checkpoint lists " + std::to_string(count) + " tensors, architecture has " +
                          std::to_string(expected.size()));
  }
  for (std::size_t t = 0; t < expected.size(); ++t) {
    const auto rows = r.get<std::uint32_t>();
    const auto cols = r.get<std::uint32_t>();
    if (static_cast<int>(rows) != expected[t][0] || static_cast<int>(cols) != expected[t][1]) {
      throw ValidationError("checkpoint tensor " + std::string(tensor_name(static_cast<int>(t))) +
                            " has a shape that does not match its architecture");
    }
  }
  ModelParams params = ModelParams::zeros(arch);
  auto& tensors = params.mutable_tensors();
  for (auto& t : tensors) {
    for (Eigen::Index i = 0; i < t.size(); ++i) t.data()[i] = r.get<double>();
  }
  if (!r.at_end()) throw ValidationError("checkpoint has trailing bytes");
  return params;
}

void save_checkpoint(const std::filesystem::path& path, const ModelParams& params) {
  detail::write_file(path, serialize_checkpoint(params));
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  return deserialize_checkpoint(detail::read_file(path));
}

}  // namespace contex
