// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

#include "forge/error.hpp"

namespace forge::trainer {

static_assert(std::endian::native == std::endian::little,
              "checkpoint I/O assumes a little-endian host");

namespace {

enum RecordType : std::uint8_t { kTensor = 1, kMask = 2, kMeta = 3 };

class Writer {
 public:
  template <typename V>
  void put(V v) {
    const auto* p = reinterpret_cast<const char*>(&v);
    bytes_.insert(bytes_.end(), p, p + sizeof(V));
  }
  void put_bytes(const void* data, std::size_t n) {
    const auto* p = static_cast<const char*>(data);
    bytes_.insert(bytes_.end(), p, p + n);
  }
  void put_string(const std::string& s) {
    put(static_cast<std::uint32_t>(s.size()));
    put_bytes(s.data(), s.size());
  }
  const std::vector<char>& bytes() const { return bytes_; }

 private:
  std::vector<char> bytes_;
};

class Reader {
 public:
  Reader(std::vector<char> bytes, std::string where)
      : bytes_(std::move(bytes)), where_(std::move(where)) {}

  template <typename V>
  V get() {
    V v;
    std::memcpy(&v, take(sizeof(V)), sizeof(V));
    return v;
  }
  const char* take(std::size_t n) {
    if (n > bytes_.size() - pos_) {
      throw FormatError(where_ + ": truncated record at byte " + std::to_string(pos_));
    }
    const char* p = bytes_.data() + pos_;
    pos_ += n;
    return p;
  }
  std::string get_string() {
    const auto n = get<std::uint32_t>();
    const char* p = take(n);
    return std::string(p, n);
  }
  std::uint64_t count(std::uint64_t n, std::size_t unit) {
    // Reject sizes that cannot fit in the remaining bytes before allocating.
    if (unit > 0 && n > (bytes_.size() - pos_) / unit) {
      throw FormatError(where_ + ": truncated record at byte " + std::to_string(pos_));
    }
    return n;
  }
  bool done() const { return pos_ == bytes_.size(); }
  const std::string& where() const { return where_; }

 private:
  std::vector<char> bytes_;
  std::size_t pos_ = 0;
  std::string where_;
};

void put_shape(Writer& w, const std::vector<std::uint64_t>& shape) {
  w.put(static_cast<std::uint32_t>(shape.size()));
  for (auto d : shape) w.put(d);
}

std::vector<std::uint64_t> get_shape(Reader& r, std::uint64_t& elements) {
  const auto ndim = r.get<std::uint32_t>();
  r.count(ndim, sizeof(std::uint64_t));
  std::vector<std::uint64_t> shape(ndim);
  elements = 1;
  for (auto& d : shape) {
    d = r.get<std::uint64_t>();
    elements *= d;
  }
  return shape;
}

std::vector<std::uint64_t> to_u64(const std::vector<std::size_t>& shape) {
  return {shape.begin(), shape.end()};
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const Checkpoint& ck) {
  Writer w;
  w.put_bytes("SIFT", 4);
  w.put(kCheckpointVersion);
  w.put(static_cast<std::uint32_t>(1 + ck.tensors.size() + ck.masks.size()));
  const std::string meta = ck.meta.dump();
  w.put(static_cast<std::uint8_t>(kMeta));
  w.put_string("meta");
  w.put(static_cast<std::uint64_t>(meta.size()));
  w.put_bytes(meta.data(), meta.size());
  for (const auto& t : ck.tensors) {
    w.put(static_cast<std::uint8_t>(kTensor));
    w.put_string(t.name);
    put_shape(w, t.shape);
    w.put_bytes(t.values.data(), t.values.size() * sizeof(float));
  }
  for (const auto& m : ck.masks) {
    w.put(static_cast<std::uint8_t>(kMask));
    w.put_string(m.name);
    put_shape(w, m.shape);
    w.put(m.seed);
    w.put(static_cast<std::uint64_t>(m.indices.size()));
    w.put_bytes(m.indices.data(), m.indices.size() * sizeof(std::uint32_t));
    w.put(static_cast<std::uint64_t>(m.log.size()));
    for (const auto& e : m.log) {
      w.put(e.step);
      w.put(e.dropped);
      w.put(e.grown);
      w.put(e.shortfall);
    }
  }
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write checkpoint " + path.string());
  out.write(w.bytes().data(), static_cast<std::streamsize>(w.bytes().size()));
  if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open checkpoint " + path.string());
  std::vector<char> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  Reader r(std::move(bytes), path.string());
  if (std::memcmp(r.take(4), "SIFT", 4) != 0) {
    throw FormatError(r.where() + ": bad magic, not a checkpoint file");
  }
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw FormatError(r.where() + ": unsupported checkpoint version " + std::to_string(version));
  }
  const auto records = r.get<std::uint32_t>();
  Checkpoint ck;
  bool have_meta = false;
  for (std::uint32_t i = 0; i < records; ++i) {
    const auto type = r.get<std::uint8_t>();
    const std::string name = r.get_string();
    if (type == kMeta) {
      const auto n = r.count(r.get<std::uint64_t>(), 1);
      const char* p = r.take(n);
      try {
        ck.meta = nlohmann::json::parse(p, p + n);
      } catch (const nlohmann::json::exception& e) {
        throw FormatError(r.where() + ": malformed meta record: " + e.what());
      }
      have_meta = true;
    } else if (type == kTensor) {
      TensorRecord t;
      t.name = name;
      std::uint64_t n = 0;
      t.shape = get_shape(r, n);
      r.count(n, sizeof(float));
      t.values.resize(n);
      std::memcpy(t.values.data(), r.take(n * sizeof(float)), n * sizeof(float));
      ck.tensors.push_back(std::move(t));
    } else if (type == kMask) {
      MaskRecord m;
      m.name = name;
      std::uint64_t positions = 0;
      m.shape = get_shape(r, positions);
      m.seed = r.get<std::uint64_t>();
      const auto n = r.count(r.get<std::uint64_t>(), sizeof(std::uint32_t));
      m.indices.resize(n);
      std::memcpy(m.indices.data(), r.take(n * sizeof(std::uint32_t)), n * sizeof(std::uint32_t));
      for (std::size_t k = 0; k < m.indices.size(); ++k) {
        if (m.indices[k] >= positions) {
          throw FormatError(r.where() + ": mask " + name + " index out of range");
        }
        if (k > 0 && m.indices[k] <= m.indices[k - 1]) {
          throw FormatError(r.where() + ": mask " + name +
                            " indices are not strictly increasing at entry " + std::to_string(k));
        }
      }
      const auto log_len = r.count(r.get<std::uint64_t>(), 4 * sizeof(std::int64_t));
      for (std::uint64_t k = 0; k < log_len; ++k) {
        mask::UpdateRecord e;
        e.step = r.get<std::int64_t>();
        e.dropped = r.get<std::int64_t>();
        e.grown = r.get<std::int64_t>();
        e.shortfall = r.get<std::int64_t>();
        m.log.push_back(e);
      }
      ck.masks.push_back(std::move(m));
    } else {
      throw FormatError(r.where() + ": unknown record type " + std::to_string(type));
    }
  }
  if (!r.done()) throw FormatError(r.where() + ": trailing bytes after the last record");
  if (!have_meta) throw FormatError(r.where() + ": missing meta record");
  return ck;
}

template <typename T>
Checkpoint snapshot(const network::Network<T>& net, nlohmann::json meta) {
  Checkpoint ck;
  ck.meta = std::move(meta);
  for (const auto& p : net.params()) {
    ck.tensors.push_back(
        {p.name, to_u64(p.shape), std::vector<float>(p.values.begin(), p.values.end())});
  }
  for (const auto& n : net.norms()) {
    const std::uint64_t c = n.state.running_mean.size();
    ck.tensors.push_back({n.name + ".running_mean", {c},
                          std::vector<float>(n.state.running_mean.begin(),
                                             n.state.running_mean.end())});
    ck.tensors.push_back({n.name + ".running_var", {c},
                          std::vector<float>(n.state.running_var.begin(),
                                             n.state.running_var.end())});
  }
  for (std::size_t i = 0; i < net.masks().size(); ++i) {
    const auto& m = net.masks()[i];
    ck.masks.push_back({net.mask_names()[i], to_u64(m.shape()), m.seed(),
                        std::vector<std::uint32_t>(m.active().begin(), m.active().end()),
                        m.log()});
  }
  return ck;
}

template <typename T>
void restore(network::Network<T>& net, const Checkpoint& ck) {
  std::map<std::string, const TensorRecord*> tensors;
  for (const auto& t : ck.tensors) tensors[t.name] = &t;
  auto fetch = [&](const std::string& name, std::size_t size) -> const TensorRecord& {
    auto it = tensors.find(name);
    if (it == tensors.end()) throw FormatError("checkpoint has no tensor " + name);
    if (it->second->values.size() != size) {
      throw FormatError("checkpoint tensor " + name + " has " +
                        std::to_string(it->second->values.size()) + " values, expected " +
                        std::to_string(size));
    }
    return *it->second;
  };
  for (auto& p : net.params()) {
    const auto& t = fetch(p.name, p.values.size());
    std::copy(t.values.begin(), t.values.end(), p.values.begin());
    std::fill(p.velocity.begin(), p.velocity.end(), T{0});
  }
  for (auto& n : net.norms()) {
    const std::size_t c = n.state.running_mean.size();
    const auto& mean = fetch(n.name + ".running_mean", c);
    const auto& var = fetch(n.name + ".running_var", c);
    std::copy(mean.values.begin(), mean.values.end(), n.state.running_mean.begin());
    std::copy(var.values.begin(), var.values.end(), n.state.running_var.begin());
  }
  std::map<std::string, const MaskRecord*> masks;
  for (const auto& m : ck.masks) masks[m.name] = &m;
  for (std::size_t i = 0; i < net.masks().size(); ++i) {
    auto it = masks.find(net.mask_names()[i]);
    if (it == masks.end()) throw FormatError("checkpoint has no mask " + net.mask_names()[i]);
    auto& m = net.masks()[i];
    if (it->second->shape != to_u64(m.shape())) {
      throw FormatError("checkpoint mask " + it->first + " has a different shape");
    }
    mask::SparseMask loaded(m.shape(), it->second->indices, it->second->seed);
    loaded.set_log(it->second->log);
    m = std::move(loaded);
  }
  net.apply_masks();
}

template Checkpoint snapshot<float>(const network::Network<float>&, nlohmann::json);
template Checkpoint snapshot<double>(const network::Network<double>&, nlohmann::json);
template void restore<float>(network::Network<float>&, const Checkpoint&);
template void restore<double>(network::Network<double>&, const Checkpoint&);

}  // namespace forge::trainer
