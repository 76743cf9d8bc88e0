#include "ficots/checkpoint.hpp"

#include "ficots/errors.hpp"
#include "ficots/serialize.hpp"

namespace ficots {

void save_checkpoint(const std::string& path, const Checkpoint& ck) {
  ByteWriter w;
  w.magic("FCCK");
  w.u16(Checkpoint::kVersion);
  w.str(ck.config_text);
  w.u64(ck.seed);
  w.u32(ck.best_epoch);
  w.u32(ck.channels);
  w.u32(static_cast<std::uint32_t>(ck.params.size()));
  for (const auto& blob : ck.params) {
    w.str(blob.name);
    w.u32(static_cast<std::uint32_t>(blob.shape.size()));
    for (auto d : blob.shape) w.u32(static_cast<std::uint32_t>(d));
    for (double v : blob.values) w.f64(v);
  }
  w.write_file(path);
}

Checkpoint load_checkpoint(const std::string& path) {
  ByteReader r = ByteReader::from_file(path);
  r.expect_magic("FCCK", "checkpoint '" + path + "'");
  const std::uint16_t version = r.u16();
  if (version != Checkpoint::kVersion)
    throw DataError("checkpoint '" + path + "': unsupported version " +
                    std::to_string(version) + ", expected " +
                    std::to_string(Checkpoint::kVersion));
  Checkpoint ck;
  ck.config_text = r.str();
  ck.seed = r.u64();
  ck.best_epoch = r.u32();
  ck.channels = r.u32();
  const std::uint32_t count = r.u32();
  ck.params.reserve(count);
  for (std::uint32_t i = 0; i < count; ++i) {
    Checkpoint::Blob blob;
    blob.name = r.str();
    const std::uint32_t ndim = r.u32();
    std::size_t total = 1;
    for (std::uint32_t d = 0; d < ndim; ++d) {
      blob.shape.push_back(r.u32());
      total *= blob.shape.back();
    }
    blob.values.resize(total);
    for (auto& v : blob.values) v = r.f64();
    ck.params.push_back(std::move(blob));
  }
  return ck;
}

Checkpoint snapshot_model(const FiCoTSModel& model,
                          const std::string& config_text, std::uint64_t seed,
                          std::uint32_t best_epoch) {
  Checkpoint ck;
  ck.config_text = config_text;
  ck.seed = seed;
  ck.best_epoch = best_epoch;
  ck.channels = static_cast<std::uint32_t>(model.config().channels);
  for (const Parameter* p : model.parameters())
    ck.params.push_back({p->name, p->tensor.shape(), p->tensor.values()});
  return ck;
}

void restore_model(FiCoTSModel& model, const Checkpoint& ck) {
  auto params = model.parameters();
  if (params.size() != ck.params.size())
    throw DataError("checkpoint: expected " + std::to_string(params.size()) +
                    " parameters, file has " +
                    std::to_string(ck.params.size()));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& blob = ck.params[i];
    if (params[i]->name != blob.name)
      throw DataError("checkpoint: parameter " + std::to_string(i) +
                      " is '" + blob.name + "', model expects '" +
                      params[i]->name + "'");
    if (params[i]->tensor.shape() != blob.shape)
      throw DataError("checkpoint: parameter '" + blob.name + "' has shape " +
                      shape_str(blob.shape) + ", model expects " +
                      shape_str(params[i]->tensor.shape()));
    params[i]->tensor.mutable_values() = blob.values;
  }
}

}  // namespace ficots
