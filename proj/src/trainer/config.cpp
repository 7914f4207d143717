// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/config.hpp"

#include <fstream>
#include <sstream>

#include "forge/error.hpp"
#include "forge/json_util.hpp"
#include "forge/plan_json.hpp"

namespace forge::trainer {

using nlohmann::json;
namespace ju = forge::json_util;
namespace fs = std::filesystem;

namespace {

constexpr std::string_view kDatasetKinds[] = {"synthetic_blobs", "synthetic_teacher",
                                              "idx_images", "csv_table"};
constexpr std::string_view kFineTune[] = {"none", "sparse", "densify"};

fs::path existing_file(const json& j, std::string_view key, const fs::path& base,
                       const std::string& where) {
  fs::path p = ju::get<std::string>(j, key, where);
  if (p.is_relative()) p = base / p;
  if (!fs::is_regular_file(p)) {
    throw ValidationError(where + "." + std::string(key) + ": file not found: " + p.string());
  }
  return p;
}

std::uint64_t get_seed(const json& j, std::string_view key, const std::string& where) {
  const std::int64_t v = ju::get_int(j, key, where);
  if (v < 0) throw ValidationError(where + "." + std::string(key) + " must be >= 0");
  return static_cast<std::uint64_t>(v);
}

double get_real(const json& j, std::string_view key, double fallback, const std::string& where) {
  const std::string k(key);
  if (!j.contains(k)) return fallback;
  if (!j.at(k).is_number()) throw ValidationError(where + "." + k + " must be a number");
  return j.at(k).get<double>();
}

void positive(std::int64_t v, const std::string& field) {
  if (v < 1) throw ValidationError(field + " must be >= 1, got " + std::to_string(v));
}

}  // namespace

std::string_view to_string(DatasetKind kind) { return kDatasetKinds[static_cast<int>(kind)]; }

DatasetKind parse_dataset_kind(std::string_view text) {
  for (int i = 0; i < 4; ++i) {
    if (kDatasetKinds[i] == text) return static_cast<DatasetKind>(i);
  }
  throw ValidationError("dataset.kind: unknown dataset kind '" + std::string(text) + "'");
}

std::string_view to_string(FineTune mode) { return kFineTune[static_cast<int>(mode)]; }

FineTune parse_fine_tune(std::string_view text) {
  for (int i = 0; i < 3; ++i) {
    if (kFineTune[i] == text) return static_cast<FineTune>(i);
  }
  throw ValidationError("fine_tune: expected none, sparse or densify, got '" + std::string(text) +
                        "'");
}

json read_json_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  std::stringstream buffer;
  buffer << in.rdbuf();
  const std::string text = buffer.str();
  try {
    return json::parse(text);
  } catch (const json::parse_error& e) {
    // Locate the byte offset reported by the parser.
    const std::size_t offset = std::min<std::size_t>(e.byte > 0 ? e.byte - 1 : 0, text.size());
    std::size_t line = 1, line_start = 0;
    for (std::size_t i = 0; i < offset; ++i) {
      if (text[i] == '\n') {
        ++line;
        line_start = i + 1;
      }
    }
    const std::size_t line_end = text.find('\n', line_start);
    const std::string context =
        text.substr(line_start, line_end == std::string::npos ? std::string::npos
                                                              : line_end - line_start);
    throw ValidationError(path.string() + ":" + std::to_string(line) + ":" +
                          std::to_string(offset - line_start + 1) + ": JSON syntax error near '" +
                          context + "'");
  }
}

DatasetSpec parse_dataset_spec(const json& j, const fs::path& base, const std::string& where) {
  DatasetSpec d;
  ju::require_object(j, where);
  d.kind = parse_dataset_kind(ju::get<std::string>(j, "kind", where));
  switch (d.kind) {
    case DatasetKind::synthetic_blobs:
      ju::require_keys(j,
                       {"kind", "classes", "features", "train_samples", "test_samples", "spread",
                        "seed"},
                       where);
      break;
    case DatasetKind::synthetic_teacher:
      ju::require_keys(j,
                       {"kind", "features", "outputs", "hidden", "train_samples", "test_samples",
                        "noise", "seed"},
                       where);
      break;
    case DatasetKind::idx_images:
      ju::require_keys(j,
                       {"kind", "train_images", "train_labels", "test_images", "test_labels",
                        "classes", "seed"},
                       where);
      d.train_images = existing_file(j, "train_images", base, where);
      d.train_labels = existing_file(j, "train_labels", base, where);
      d.test_images = existing_file(j, "test_images", base, where);
      d.test_labels = existing_file(j, "test_labels", base, where);
      break;
    case DatasetKind::csv_table:
      ju::require_keys(j, {"kind", "train", "test", "features", "classes", "header", "seed"},
                       where);
      d.train_csv = existing_file(j, "train", base, where);
      d.test_csv = existing_file(j, "test", base, where);
      d.csv_header = ju::get_or<bool>(j, "header", false, where);
      if (!j.contains("features")) throw ValidationError(where + ": csv_table needs 'features'");
      break;
  }
  d.classes = ju::get_int_or(j, "classes", d.classes, where);
  d.features = ju::get_int_or(j, "features", d.features, where);
  d.outputs = ju::get_int_or(j, "outputs", d.outputs, where);
  d.hidden = ju::get_int_or(j, "hidden", d.hidden, where);
  d.train_samples = ju::get_int_or(j, "train_samples", d.train_samples, where);
  d.test_samples = ju::get_int_or(j, "test_samples", d.test_samples, where);
  d.spread = get_real(j, "spread", d.spread, where);
  d.noise = get_real(j, "noise", d.noise, where);
  if (j.contains("seed")) d.seed = get_seed(j, "seed", where);
  if (d.classes < 2) throw ValidationError(where + ".classes must be >= 2");
  positive(d.features, where + ".features");
  positive(d.outputs, where + ".outputs");
  positive(d.hidden, where + ".hidden");
  positive(d.train_samples, where + ".train_samples");
  positive(d.test_samples, where + ".test_samples");
  if (!(d.spread > 0.0)) throw ValidationError(where + ".spread must be > 0");
  if (!(d.noise >= 0.0)) throw ValidationError(where + ".noise must be >= 0");
  return d;
}

TrainConfig parse_config(const json& j, const fs::path& base) {
  ju::require_keys(j,
                   {"network", "transform", "mask", "optimizer", "dataset", "seeds", "output_dir",
                    "fine_tune", "init_checkpoint", "precision", "execution", "check_finite",
                    "checkpoints"},
                   "config");
  TrainConfig c;

  if (!j.contains("network")) throw ValidationError("config: missing required field 'network'");
  const json& net = j.at("network");
  ju::require_keys(net, {"layers", "activation"}, "network");
  if (!net.contains("layers") || !net.at("layers").is_array() || net.at("layers").empty()) {
    throw ValidationError("network.layers must be a non-empty array");
  }
  const json& layers = net.at("layers");
  for (std::size_t i = 0; i < layers.size(); ++i) {
    c.layers.push_back(
        planner::layer_spec_from_json(layers[i], "network.layers[" + std::to_string(i) + "]"));
  }
  {
    auto roles = c.layers;
    planner::assign_default_roles(roles);
    for (std::size_t i = 0; i < layers.size(); ++i) {
      if (!layers[i].contains("role")) c.layers[i].role = roles[i].role;
    }
  }
  c.activation = planner::parse_nonlinearity(ju::get_or<std::string>(net, "activation", "relu",
                                                                     "network"));

  if (j.contains("transform")) {
    const json& t = j.at("transform");
    const std::string where = "transform";
    ju::require_keys(t,
                     {"kind", "sparsity", "quantum", "keep_boundary_dense", "redistribute",
                      "nonlinearity"},
                     where);
    c.request.transform = planner::parse_transform(ju::get<std::string>(t, "kind", where));
    c.request.sparsity = get_real(t, "sparsity", 0.0, where);
    c.request.quantum = ju::get_int_or(t, "quantum", 1, where);
    c.request.keep_boundary_dense = ju::get_or<bool>(t, "keep_boundary_dense", true, where);
    c.request.nonlinearity = planner::parse_nonlinearity(
        ju::get_or<std::string>(t, "nonlinearity", "batchnorm_relu", where));
    c.redistribute = ju::get_or<bool>(t, "redistribute", false, where);
  }
  if (c.request.transform == planner::TransformKind::low_rank_dense) {
    if (!(c.request.sparsity >= 1.0)) {
      throw ValidationError("transform.sparsity carries k_lr for low_rank_dense and must be >= 1");
    }
  } else if (!(c.request.sparsity >= 0.0 && c.request.sparsity < 1.0)) {
    throw ValidationError("transform.sparsity must lie in [0, 1), got " +
                          std::to_string(c.request.sparsity));
  }
  positive(c.request.quantum, "transform.quantum");

  if (j.contains("mask")) {
    const json& m = j.at("mask");
    ju::require_keys(m, {"method", "alpha", "delta_t", "anneal_end_fraction"}, "mask");
    c.schedule.method = mask::parse_method(ju::get_or<std::string>(m, "method", "static", "mask"));
    c.schedule.alpha = get_real(m, "alpha", c.schedule.alpha, "mask");
    c.schedule.delta_t = ju::get_int_or(m, "delta_t", c.schedule.delta_t, "mask");
    c.schedule.anneal_end_fraction =
        get_real(m, "anneal_end_fraction", c.schedule.anneal_end_fraction, "mask");
  }
  c.schedule.validate();

  if (j.contains("optimizer")) {
    const json& o = j.at("optimizer");
    const std::string where = "optimizer";
    ju::require_keys(o,
                     {"lr_peak", "lr_min", "momentum", "weight_decay", "nesterov", "epochs",
                      "batch_size"},
                     where);
    c.optimizer.lr_peak = get_real(o, "lr_peak", c.optimizer.lr_peak, where);
    c.optimizer.lr_min = get_real(o, "lr_min", c.optimizer.lr_min, where);
    c.optimizer.momentum = get_real(o, "momentum", c.optimizer.momentum, where);
    c.optimizer.weight_decay = get_real(o, "weight_decay", c.optimizer.weight_decay, where);
    c.optimizer.nesterov = ju::get_or<bool>(o, "nesterov", true, where);
    c.optimizer.epochs = ju::get_int_or(o, "epochs", c.optimizer.epochs, where);
    c.optimizer.batch_size = ju::get_int_or(o, "batch_size", c.optimizer.batch_size, where);
  }
  if (!(c.optimizer.lr_peak > 0.0)) throw ValidationError("optimizer.lr_peak must be > 0");
  if (!(c.optimizer.lr_min >= 0.0 && c.optimizer.lr_min <= c.optimizer.lr_peak)) {
    throw ValidationError("optimizer.lr_min must lie in [0, lr_peak]");
  }
  if (!(c.optimizer.momentum >= 0.0 && c.optimizer.momentum < 1.0)) {
    throw ValidationError("optimizer.momentum must lie in [0, 1)");
  }
  if (!(c.optimizer.weight_decay >= 0.0)) {
    throw ValidationError("optimizer.weight_decay must be >= 0");
  }
  positive(c.optimizer.epochs, "optimizer.epochs");
  if (c.optimizer.batch_size < 2) throw ValidationError("optimizer.batch_size must be >= 2");

  if (!j.contains("dataset")) throw ValidationError("config: missing required field 'dataset'");
  c.dataset = parse_dataset_spec(j.at("dataset"), base);

  if (!j.contains("seeds")) {
    throw ValidationError("config: missing required field 'seeds' (model, mask, data)");
  }
  const json& s = j.at("seeds");
  ju::require_keys(s, {"model", "mask", "data"}, "seeds");
  c.seeds.model = get_seed(s, "model", "seeds");
  c.seeds.mask = get_seed(s, "mask", "seeds");
  c.seeds.data = get_seed(s, "data", "seeds");

  if (j.contains("output_dir")) {
    c.output_dir = ju::get<std::string>(j, "output_dir", "config");
    if (c.output_dir.is_relative()) c.output_dir = base / c.output_dir;
  }
  c.fine_tune = parse_fine_tune(ju::get_or<std::string>(j, "fine_tune", "none", "config"));
  if (j.contains("init_checkpoint")) c.init_checkpoint = existing_file(j, "init_checkpoint", base, "config");
  const std::string precision = ju::get_or<std::string>(j, "precision", "f32", "config");
  if (precision == "f32") {
    c.precision = Precision::f32;
  } else if (precision == "f64") {
    c.precision = Precision::f64;
  } else {
    throw ValidationError("precision: expected f32 or f64, got '" + precision + "'");
  }
  c.path = network::parse_exec_path(
      ju::get_or<std::string>(j, "execution", "masked_dense", "config"));
  c.check_finite = ju::get_or<bool>(j, "check_finite", false, "config");
  c.write_checkpoints = ju::get_or<bool>(j, "checkpoints", true, "config");

  // Catch shape problems at load time rather than mid-run.
  planner::check_chain(c.layers);
  return c;
}

TrainConfig load_config(const fs::path& path) {
  const json j = read_json_file(path);
  return parse_config(j, path.parent_path());
}

json to_json(const DatasetSpec& d) {
  json j = {{"kind", to_string(d.kind)}};
  switch (d.kind) {
    case DatasetKind::synthetic_blobs:
      j.update({{"classes", d.classes},
                {"features", d.features},
                {"train_samples", d.train_samples},
                {"test_samples", d.test_samples},
                {"spread", d.spread}});
      break;
    case DatasetKind::synthetic_teacher:
      j.update({{"features", d.features},
                {"outputs", d.outputs},
                {"hidden", d.hidden},
                {"train_samples", d.train_samples},
                {"test_samples", d.test_samples},
                {"noise", d.noise}});
      break;
    case DatasetKind::idx_images:
      j.update({{"train_images", d.train_images.string()},
                {"train_labels", d.train_labels.string()},
                {"test_images", d.test_images.string()},
                {"test_labels", d.test_labels.string()},
                {"classes", d.classes}});
      break;
    case DatasetKind::csv_table:
      j.update({{"train", d.train_csv.string()},
                {"test", d.test_csv.string()},
                {"features", d.features},
                {"classes", d.classes},
                {"header", d.csv_header}});
      break;
  }
  if (d.seed) j["seed"] = *d.seed;
  return j;
}

json to_json(const TrainConfig& c) {
  json layers = json::array();
  for (const auto& spec : c.layers) layers.push_back(planner::to_json(spec));
  json j = {
      {"network", {{"layers", layers}, {"activation", planner::to_string(c.activation)}}},
      {"transform",
       {{"kind", planner::to_string(c.request.transform)},
        {"sparsity", c.request.sparsity},
        {"quantum", c.request.quantum},
        {"keep_boundary_dense", c.request.keep_boundary_dense},
        {"redistribute", c.redistribute},
        {"nonlinearity", planner::to_string(c.request.nonlinearity)}}},
      {"mask",
       {{"method", mask::to_string(c.schedule.method)},
        {"alpha", c.schedule.alpha},
        {"delta_t", c.schedule.delta_t},
        {"anneal_end_fraction", c.schedule.anneal_end_fraction}}},
      {"optimizer",
       {{"lr_peak", c.optimizer.lr_peak},
        {"lr_min", c.optimizer.lr_min},
        {"momentum", c.optimizer.momentum},
        {"weight_decay", c.optimizer.weight_decay},
        {"nesterov", c.optimizer.nesterov},
        {"epochs", c.optimizer.epochs},
        {"batch_size", c.optimizer.batch_size}}},
      {"dataset", to_json(c.dataset)},
      {"seeds", {{"model", c.seeds.model}, {"mask", c.seeds.mask}, {"data", c.seeds.data}}},
      {"fine_tune", to_string(c.fine_tune)},
      {"precision", c.precision == Precision::f32 ? "f32" : "f64"},
      {"execution", network::to_string(c.path)},
      {"check_finite", c.check_finite},
      {"checkpoints", c.write_checkpoints},
  };
  if (!c.output_dir.empty()) j["output_dir"] = c.output_dir.string();
  if (!c.init_checkpoint.empty()) j["init_checkpoint"] = c.init_checkpoint.string();
  return j;
}

}  // namespace forge::trainer
