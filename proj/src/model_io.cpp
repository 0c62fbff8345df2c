#include "nrd/model_io.hpp"

#include "nrd/binary_io.hpp"
#include "nrd/errors.hpp"

namespace nrd {

namespace {

void put_params(ByteWriter& w, const RDModel<float>& m) {
  const auto& p = m.reaction;
  w.put_array<float>({p.w0.data(), static_cast<std::size_t>(p.w0.size())});
  w.put_array<float>({p.b0.data(), static_cast<std::size_t>(p.b0.size())});
  w.put_array<float>({p.w1.data(), static_cast<std::size_t>(p.w1.size())});
  w.put_array<float>({m.diffusion.values.data(), static_cast<std::size_t>(m.diffusion.values.size())});
}

}  // namespace

std::vector<std::uint8_t> encode_model(const RDModel<float>& model, const ModelMetadata& meta) {
  model.validate();
  ByteWriter w;
  w.put_magic("RDMD");
  w.put(kModelVersion);
  w.put(static_cast<std::uint32_t>(model.channels()));
  w.put(static_cast<std::uint32_t>(model.hidden()));
  w.put(static_cast<std::uint32_t>(model.diffusion.mode));
  put_params(w, model);
  w.put(meta.target_hash);
  w.put(meta.training_steps);
  w.put_checksum();
  return w.bytes();
}

ModelFile decode_model(std::vector<std::uint8_t> bytes, const std::string& what) {
  ByteReader r(std::move(bytes), what);
  r.expect_magic("RDMD");
  const auto version = r.get<std::uint32_t>();
  if (version != kModelVersion) r.fail("unsupported version " + std::to_string(version));
  const auto n = r.get<std::uint32_t>(), h = r.get<std::uint32_t>(), mode = r.get<std::uint32_t>();
  if (n < 3 || n > 4096 || h < 1 || h > 65536) r.fail("implausible model shape");
  if (mode > 1) r.fail("unknown diffusion mode " + std::to_string(mode));

  ModelFile f;
  auto& p = f.model.reaction;
  p = ReactionParams<float>::zeros(static_cast<int>(n), static_cast<int>(h));
  auto load = [&](float* dst, std::size_t count) {
    auto v = r.get_array<float>(count);
    std::copy(v.begin(), v.end(), dst);
  };
  load(p.w0.data(), std::size_t(n) * h);
  load(p.b0.data(), h);
  load(p.w1.data(), std::size_t(h) * n);
  f.model.diffusion.mode = static_cast<DiffusionMode>(mode);
  f.model.diffusion.values.resize(n);
  load(f.model.diffusion.values.data(), n);
  f.meta.target_hash = r.get<std::uint64_t>();
  f.meta.training_steps = r.get<std::uint64_t>();
  r.verify_checksum();
  r.expect_end();
  try {
    f.model.validate();
  } catch (const ContractError& e) {
    r.fail(e.what());
  }
  return f;
}

void save_model(const std::filesystem::path& path, const RDModel<float>& model, const ModelMetadata& meta) {
  ByteWriter w;
  w.put_bytes(encode_model(model, meta));
  w.save(path);
}

ModelFile load_model(const std::filesystem::path& path) {
  ByteReader r = ByteReader::open(path, "model " + path.string());
  auto bytes = r.get_bytes(r.remaining());
  return decode_model({bytes.begin(), bytes.end()}, "model " + path.string());
}

std::uint32_t model_checksum(const RDModel<float>& model) {
  ByteWriter w;
  put_params(w, model);
  return crc32(w.bytes());
}

}  // namespace nrd
