#include "gcfsr/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "gcfsr/errors.hpp"

namespace gcfsr {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

class Writer {
 public:
  template <class T>
  void pod(T v) {
    const auto* p = reinterpret_cast<const std::uint8_t*>(&v);
    out.insert(out.end(), p, p + sizeof(T));
  }
  void str(const std::string& s) {
    pod(static_cast<std::uint32_t>(s.size()));
    out.insert(out.end(), s.begin(), s.end());
  }
  void bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const std::uint8_t*>(data);
    out.insert(out.end(), p, p + n);
  }
  std::vector<std::uint8_t> out;
};

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : buf(b) {}
  void need(std::size_t n) const {
    if (buf.size() - pos < n) throw CheckpointError("checkpoint truncated at byte " + std::to_string(pos));
  }
  template <class T>
  T pod() {
    need(sizeof(T));
    T v;
    std::memcpy(&v, buf.data() + pos, sizeof(T));
    pos += sizeof(T);
    return v;
  }
  std::string str() {
    const auto n = pod<std::uint32_t>();
    need(n);
    std::string s(reinterpret_cast<const char*>(buf.data() + pos), n);
    pos += n;
    return s;
  }
  void bytes(void* dst, std::size_t n) {
    need(n);
    std::memcpy(dst, buf.data() + pos, n);
    pos += n;
  }
  bool done() const { return pos == buf.size(); }

  std::span<const std::uint8_t> buf;
  std::size_t pos = 0;
};

}  // namespace

const Tensor& Checkpoint::tensor(const std::string& name) const {
  for (const auto& [n, t] : tensors)
    if (n == name) return t;
  throw CheckpointError("checkpoint has no tensor '" + name + "'");
}

std::uint64_t Checkpoint::counter(const std::string& name) const {
  for (const auto& [n, v] : counters)
    if (n == name) return v;
  throw CheckpointError("checkpoint has no counter '" + name + "'");
}

std::vector<std::uint8_t> Checkpoint::serialize() const {
  Writer w;
  w.bytes("GCFS", 4);
  w.pod(kVersion);
  w.str(config_text);
  w.pod(iteration);
  w.str(rng_state);
  w.pod(static_cast<std::uint32_t>(tensors.size()));
  for (const auto& [name, t] : tensors) {
    w.str(name);
    w.pod(static_cast<std::uint8_t>(t.dtype()));
    w.pod(static_cast<std::uint32_t>(t.ndim()));
    for (auto d : t.shape()) w.pod(static_cast<std::int64_t>(d));
    dispatch(t.dtype(), [&](auto tag) {
      using T = decltype(tag);
      auto d = t.data<T>();
      w.bytes(d.data(), d.size() * sizeof(T));
    });
  }
  w.pod(static_cast<std::uint32_t>(counters.size()));
  for (const auto& [name, v] : counters) {
    w.str(name);
    w.pod(v);
  }
  return std::move(w.out);
}

Checkpoint Checkpoint::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  char magic[4];
  r.bytes(magic, 4);
  if (std::memcmp(magic, "GCFS", 4) != 0) throw CheckpointError("not a checkpoint file (bad magic)");
  const auto version = r.pod<std::uint32_t>();
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  Checkpoint c;
  c.config_text = r.str();
  c.iteration = r.pod<std::uint64_t>();
  c.rng_state = r.str();
  const auto nt = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < nt; ++i) {
    std::string name = r.str();
    const auto dt = r.pod<std::uint8_t>();
    if (dt > 1) throw CheckpointError("tensor '" + name + "': unknown dtype " + std::to_string(dt));
    const auto nd = r.pod<std::uint32_t>();
    if (nd > 8) throw CheckpointError("tensor '" + name + "': implausible rank");
    Shape shape;
    for (std::uint32_t k = 0; k < nd; ++k) {
      const auto d = r.pod<std::int64_t>();
      if (d < 0 || d > (std::int64_t{1} << 32))
        throw CheckpointError("tensor '" + name + "': bad dimension");
      shape.push_back(d);
    }
    const DType dtype = static_cast<DType>(dt);
    Tensor t = Tensor::zeros(shape, dtype);
    dispatch(dtype, [&](auto tag) {
      using T = decltype(tag);
      auto d = t.mutable_data<T>();
      r.bytes(d.data(), d.size() * sizeof(T));
    });
    c.tensors.emplace_back(std::move(name), std::move(t));
  }
  const auto nc = r.pod<std::uint32_t>();
  for (std::uint32_t i = 0; i < nc; ++i) {
    std::string name = r.str();
    c.counters.emplace_back(std::move(name), r.pod<std::uint64_t>());
  }
  if (!r.done()) throw CheckpointError("trailing bytes after checkpoint payload");
  return c;
}

void Checkpoint::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint Checkpoint::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  try {
    return deserialize(bytes);
  } catch (const CheckpointError& e) {
    throw CheckpointError(path.string() + ": " + e.what());
  }
}

ModelConfig Checkpoint::config() const {
  try {
    return ModelConfig::parse(config_text);
  } catch (const ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config is invalid: ") + e.what());
  }
}

void restore_tensor(Tensor& dst, const Tensor& src, const std::string& name) {
  if (src.shape() != dst.shape() || src.dtype() != dst.dtype())
    throw CheckpointError("checkpoint tensor '" + name + "' has shape " + to_string(src.shape()) +
                          " but the model expects " + to_string(dst.shape()));
  dispatch(dst.dtype(), [&](auto tag) {
    using T = decltype(tag);
    auto s = src.data<T>();
    auto d = dst.mutable_data<T>();
    std::copy(s.begin(), s.end(), d.begin());
  });
}

void load_params(const Checkpoint& checkpoint, const std::string& prefix, ParamSet& params) {
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string name = prefix + params.names()[i];
    restore_tensor(params.tensors()[i], checkpoint.tensor(name), name);
  }
}

}  // namespace gcfsr
