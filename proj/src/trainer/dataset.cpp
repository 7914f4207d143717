// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/dataset.hpp"

#include <charconv>
#include <cstdio>
#include <cmath>
#include <fstream>
#include <iterator>
#include <string>

#include "forge/error.hpp"
#include "forge/rng.hpp"

namespace forge::trainer {

namespace fs = std::filesystem;

namespace {

Split blob_split(const std::vector<double>& centers, std::int64_t classes, std::int64_t features,
                 std::int64_t n, double spread, std::uint64_t key) {
  Split s;
  s.samples = n;
  s.features = features;
  s.classes = classes;
  s.x.resize(static_cast<std::size_t>(n * features));
  s.labels.resize(static_cast<std::size_t>(n));
  CounterRng rng(key);
  for (std::int64_t i = 0; i < n; ++i) {
    const auto label = static_cast<std::int32_t>(rng.bounded(static_cast<std::uint64_t>(classes)));
    s.labels[i] = label;
    for (std::int64_t f = 0; f < features; ++f) {
      s.x[i * features + f] =
          static_cast<float>(centers[label * features + f] + spread * rng.normal());
    }
  }
  return s;
}

std::uint32_t read_be32(const std::uint8_t* p) {
  return (std::uint32_t{p[0]} << 24) | (std::uint32_t{p[1]} << 16) | (std::uint32_t{p[2]} << 8) |
         std::uint32_t{p[3]};
}

}  // namespace

Dataset make_blobs(std::int64_t classes, std::int64_t features, std::int64_t train_samples,
                   std::int64_t test_samples, double spread, std::uint64_t seed) {
  std::vector<double> centers(static_cast<std::size_t>(classes * features));
  CounterRng rng(derive_key(seed, "centers"));
  for (auto& c : centers) c = 2.0 * rng.normal();
  return {blob_split(centers, classes, features, train_samples, spread, derive_key(seed, "train")),
          blob_split(centers, classes, features, test_samples, spread, derive_key(seed, "test"))};
}

Dataset make_teacher(std::int64_t features, std::int64_t hidden, std::int64_t outputs,
                     std::int64_t train_samples, std::int64_t test_samples, double noise,
                     std::uint64_t seed) {
  std::vector<double> w1(static_cast<std::size_t>(features * hidden));
  std::vector<double> w2(static_cast<std::size_t>(hidden * outputs));
  CounterRng init(derive_key(seed, "teacher"));
  for (auto& w : w1) w = init.normal() / std::sqrt(static_cast<double>(features));
  for (auto& w : w2) w = init.normal() / std::sqrt(static_cast<double>(hidden));
  auto split = [&](std::int64_t n, std::uint64_t key) {
    Split s;
    s.samples = n;
    s.features = features;
    s.classification = false;
    s.outputs = outputs;
    s.x.resize(static_cast<std::size_t>(n * features));
    s.targets.resize(static_cast<std::size_t>(n * outputs));
    CounterRng rng(key);
    std::vector<double> h(static_cast<std::size_t>(hidden));
    for (std::int64_t i = 0; i < n; ++i) {
      for (std::int64_t f = 0; f < features; ++f) {
        s.x[i * features + f] = static_cast<float>(rng.normal());
      }
      for (std::int64_t k = 0; k < hidden; ++k) {
        double acc = 0;
        for (std::int64_t f = 0; f < features; ++f) acc += s.x[i * features + f] * w1[f * hidden + k];
        h[k] = std::tanh(acc);
      }
      for (std::int64_t o = 0; o < outputs; ++o) {
        double acc = 0;
        for (std::int64_t k = 0; k < hidden; ++k) acc += h[k] * w2[k * outputs + o];
        s.targets[i * outputs + o] = static_cast<float>(acc + noise * rng.normal());
      }
    }
    return s;
  };
  return {split(train_samples, derive_key(seed, "train")),
          split(test_samples, derive_key(seed, "test"))};
}

IdxArray read_idx(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FormatError("cannot open IDX file " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                  std::istreambuf_iterator<char>());
  const std::string where = path.string();
  if (bytes.size() < 4) throw FormatError(where + ": truncated IDX header");
  const std::uint32_t magic = read_be32(bytes.data());
  if ((magic >> 16) != 0 || ((magic >> 8) & 0xff) != 0x08) {
    char buf[16];
    std::snprintf(buf, sizeof buf, "0x%08x", magic);
    throw FormatError(where + ": bad IDX magic number " + std::string(buf) +
                      " (expected 0x000008NN, unsigned bytes)");
  }
  const std::size_t ndims = magic & 0xff;
  if (ndims == 0) throw FormatError(where + ": IDX file declares zero dimensions");
  if (bytes.size() < 4 + 4 * ndims) throw FormatError(where + ": truncated IDX dimensions");
  IdxArray out;
  std::size_t count = 1;
  for (std::size_t d = 0; d < ndims; ++d) {
    out.dims.push_back(read_be32(bytes.data() + 4 + 4 * d));
    count *= out.dims.back();
  }
  const std::size_t header = 4 + 4 * ndims;
  if (bytes.size() != header + count) {
    throw FormatError(where + ": IDX payload has " + std::to_string(bytes.size() - header) +
                      " bytes, dimensions require " + std::to_string(count));
  }
  out.data.assign(bytes.begin() + static_cast<std::ptrdiff_t>(header), bytes.end());
  return out;
}

void write_idx(const fs::path& path, const IdxArray& array) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write " + path.string());
  auto be32 = [&](std::uint32_t v) {
    const char b[4] = {static_cast<char>(v >> 24), static_cast<char>(v >> 16),
                       static_cast<char>(v >> 8), static_cast<char>(v)};
    out.write(b, 4);
  };
  be32(0x00000800u | static_cast<std::uint32_t>(array.dims.size()));
  for (auto d : array.dims) be32(d);
  out.write(reinterpret_cast<const char*>(array.data.data()),
            static_cast<std::streamsize>(array.data.size()));
  if (!out) throw Error("failed writing " + path.string());
}

Split idx_split(const IdxArray& images, const IdxArray& labels, std::int64_t classes) {
  if (images.dims.empty() || labels.dims.size() != 1 || labels.dims[0] != images.dims[0]) {
    throw FormatError("IDX labels must be one-dimensional with one entry per image");
  }
  Split s;
  s.samples = images.dims[0];
  s.features = s.samples > 0 ? static_cast<std::int64_t>(images.data.size()) / s.samples : 0;
  s.classes = classes;
  s.x.resize(images.data.size());
  for (std::size_t i = 0; i < images.data.size(); ++i) s.x[i] = images.data[i] / 255.0f;
  s.labels.resize(labels.data.size());
  for (std::size_t i = 0; i < labels.data.size(); ++i) {
    if (labels.data[i] >= classes) {
      throw ValidationError("IDX label " + std::to_string(labels.data[i]) + " at sample " +
                            std::to_string(i) + " out of range [0, " + std::to_string(classes) +
                            ")");
    }
    s.labels[i] = labels.data[i];
  }
  return s;
}

Split read_csv(const fs::path& path, std::int64_t features, std::int64_t classes, bool header) {
  std::ifstream in(path);
  if (!in) throw FormatError("cannot open CSV file " + path.string());
  Split s;
  s.features = features;
  s.classes = classes;
  std::string line;
  std::int64_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (header && row == 1) continue;
    if (line.empty()) continue;
    const std::string where = path.string() + " row " + std::to_string(row);
    std::vector<std::string_view> fields;
    std::string_view rest(line);
    while (true) {
      const auto comma = rest.find(',');
      fields.push_back(rest.substr(0, comma));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
    }
    if (static_cast<std::int64_t>(fields.size()) != features + 1) {
      throw FormatError(where + ": expected " + std::to_string(features) +
                        " features and a label, got " + std::to_string(fields.size()) +
                        " fields");
    }
    for (std::int64_t f = 0; f < features; ++f) {
      auto field = fields[f];
      while (!field.empty() && field.front() == ' ') field.remove_prefix(1);
      float v = 0;
      auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
      if (ec != std::errc() || ptr != field.data() + field.size()) {
        throw FormatError(where + ": field " + std::to_string(f + 1) + " is not a number");
      }
      s.x.push_back(v);
    }
    auto lf = fields.back();
    while (!lf.empty() && lf.front() == ' ') lf.remove_prefix(1);
    std::int64_t label = -1;
    auto [ptr, ec] = std::from_chars(lf.data(), lf.data() + lf.size(), label);
    if (ec != std::errc() || ptr != lf.data() + lf.size()) {
      throw FormatError(where + ": label is not an integer");
    }
    if (label < 0 || label >= classes) {
      throw ValidationError(where + ": label " + std::to_string(label) + " out of range [0, " +
                            std::to_string(classes) + ")");
    }
    s.labels.push_back(static_cast<std::int32_t>(label));
    ++s.samples;
  }
  return s;
}

Dataset load_dataset(const DatasetSpec& spec, std::uint64_t data_seed) {
  const std::uint64_t seed = spec.seed.value_or(data_seed);
  switch (spec.kind) {
    case DatasetKind::synthetic_blobs:
      return make_blobs(spec.classes, spec.features, spec.train_samples, spec.test_samples,
                        spec.spread, seed);
    case DatasetKind::synthetic_teacher:
      return make_teacher(spec.features, spec.hidden, spec.outputs, spec.train_samples,
                          spec.test_samples, spec.noise, seed);
    case DatasetKind::idx_images: {
      Dataset d{idx_split(read_idx(spec.train_images), read_idx(spec.train_labels), spec.classes),
                idx_split(read_idx(spec.test_images), read_idx(spec.test_labels), spec.classes)};
      if (d.train.features != d.test.features) {
        throw FormatError("train and test images differ in size");
      }
      return d;
    }
    case DatasetKind::csv_table:
      return {read_csv(spec.train_csv, spec.features, spec.classes, spec.csv_header),
              read_csv(spec.test_csv, spec.features, spec.classes, spec.csv_header)};
  }
  throw ValidationError("unknown dataset kind");
}

}  // namespace forge::trainer
