// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/bench.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include "forge/csr.hpp"
#include "forge/error.hpp"
#include "forge/json_util.hpp"
#include "forge/mask.hpp"
#include "forge/ops.hpp"
#include "forge/planner.hpp"
#include "forge/rng.hpp"

namespace forge::bench {

namespace ju = json_util;
using tensor::Tape;
using tensor::Var;

void BenchCase::validate() const {
  if (d_in < 1 || d_out < 1 || batch < 1) {
    throw ValidationError("bench: d_in, d_out and batch must be positive");
  }
  if (repetitions < 10) throw ValidationError("bench: repetitions must be at least 10");
  if (warmup < 0) throw ValidationError("bench: warmup must be non-negative");
  if (sparsities.empty()) throw ValidationError("bench: sparsities must not be empty");
  for (double s : sparsities) {
    if (!(s >= 0.0 && s < 1.0)) throw ValidationError("bench: sparsity values must lie in [0, 1)");
  }
  if (transform != "sparse_wide") {
    throw ValidationError("bench: transform must be sparse_wide, got '" + transform + "'");
  }
}

BenchCase parse_bench_case(const nlohmann::json& j) {
  ju::require_object(j, "bench");
  ju::require_keys(j, {"d_in", "d_out", "batch", "sparsities", "transform", "repetitions",
                       "warmup", "training", "seed"},
                   "bench");
  BenchCase c;
  c.d_in = ju::get_int_or(j, "d_in", c.d_in, "bench");
  c.d_out = ju::get_int_or(j, "d_out", c.d_out, "bench");
  c.batch = ju::get_int_or(j, "batch", c.batch, "bench");
  c.sparsities = ju::get_or<std::vector<double>>(j, "sparsities", c.sparsities, "bench");
  c.transform = ju::get_or<std::string>(j, "transform", c.transform, "bench");
  c.repetitions = ju::get_int_or(j, "repetitions", c.repetitions, "bench");
  c.warmup = ju::get_int_or(j, "warmup", c.warmup, "bench");
  c.training = ju::get_or<bool>(j, "training", c.training, "bench");
  c.seed = ju::get_or<std::uint64_t>(j, "seed", c.seed, "bench");
  c.validate();
  return c;
}

BenchCase load_bench_case(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot read bench config " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ValidationError(path.string() + ": " + e.what());
  }
  return parse_bench_case(j);
}

namespace {

enum class Path { dense_widened, masked_dense, compressed };

struct Operands {
  std::size_t batch = 0, rows = 0, cols = 0;
  std::vector<double> x;
  std::vector<double> w;  // zero at inactive positions
  std::vector<std::uint8_t> bitmap;
  std::shared_ptr<const tensor::CsrPattern> pattern;
};

// One call of a path; returns the MACs the engine counted.
std::uint64_t run_once(const Operands& op, Path path, bool training) {
  Tape<double> tape;
  Var x = tape.constant({op.batch, op.rows}, op.x);
  Var w = tape.variable({op.rows, op.cols}, op.w);
  Var y;
  switch (path) {
    case Path::dense_widened:
      y = tensor::masked_linear(tape, x, w, {});
      break;
    case Path::masked_dense:
      y = tensor::masked_linear(tape, x, w, std::span<const std::uint8_t>(op.bitmap));
      break;
    case Path::compressed:
      y = tensor::csr_linear(tape, x, w, op.pattern);
      break;
  }
  const std::uint64_t macs = tape.macs();
  if (training) tape.backward(tensor::sum_squares(tape, y));
  return macs;
}

double median_ns(const Operands& op, Path path, const BenchCase& c) {
  for (std::int64_t i = 0; i < c.warmup; ++i) run_once(op, path, c.training);
  std::vector<double> times;
  for (std::int64_t i = 0; i < c.repetitions; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    run_once(op, path, c.training);
    const auto t1 = std::chrono::steady_clock::now();
    times.push_back(std::chrono::duration<double, std::nano>(t1 - t0).count());
  }
  std::sort(times.begin(), times.end());
  const std::size_t n = times.size();
  return n % 2 ? times[n / 2] : 0.5 * (times[n / 2 - 1] + times[n / 2]);
}

int threads_from_env() {
  const char* env = std::getenv("FORGE_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  const long n = std::strtol(env, nullptr, 10);
  return n >= 1 ? static_cast<int>(n) : 1;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

}  // namespace

BenchResult bench_spmm(const BenchCase& c) {
  c.validate();
  BenchResult result;
  result.config = c;
  result.threads = threads_from_env();
  const auto spec = planner::LayerSpec::linear(c.d_in, c.d_out, false);
  for (std::size_t k = 0; k < c.sparsities.size(); ++k) {
    const double s = c.sparsities[k];
    const auto plan = planner::plan_sparse_wide(spec, s);
    const auto& slot = plan.slots.at(0);
    Operands op;
    op.batch = static_cast<std::size_t>(c.batch);
    op.rows = static_cast<std::size_t>(slot.rows());
    op.cols = static_cast<std::size_t>(slot.cols());
    const std::uint64_t key = derive_key(c.seed, k);
    const auto mask = mask::init_mask_with_count({op.rows, op.cols},
                                                 static_cast<std::size_t>(slot.active),
                                                 derive_key(key, "mask"));
    CounterRng rng(derive_key(key, "values"));
    op.x.resize(op.batch * op.rows);
    for (auto& v : op.x) v = rng.normal();
    op.w.resize(op.rows * op.cols);
    for (auto& v : op.w) v = rng.normal();
    mask.apply(std::span<double>(op.w));
    op.bitmap.assign(mask.bitmap().begin(), mask.bitmap().end());
    op.pattern = std::make_shared<const tensor::CsrPattern>(
        tensor::CsrPattern::from_sorted_indices(mask.active(), op.rows, op.cols));

    BenchRow row;
    row.sparsity = s;
    row.effective_sparsity = plan.effective_sparsity;
    row.wide_in = static_cast<std::int64_t>(op.rows);
    row.wide_out = static_cast<std::int64_t>(op.cols);
    row.active = slot.active;
    row.positions = slot.positions();
    row.dense_widened_macs = static_cast<std::int64_t>(run_once(op, Path::dense_widened, false));
    row.masked_dense_macs = static_cast<std::int64_t>(run_once(op, Path::masked_dense, false));
    row.compressed_macs = static_cast<std::int64_t>(run_once(op, Path::compressed, false));
    row.dense_widened_ns = median_ns(op, Path::dense_widened, c);
    row.masked_dense_ns = median_ns(op, Path::masked_dense, c);
    row.compressed_ns = median_ns(op, Path::compressed, c);
    result.rows.push_back(row);
  }
  return result;
}

std::string bench_csv(const BenchResult& result) {
  std::ostringstream out;
  out << kBenchHeader << '\n';
  for (const auto& r : result.rows) {
    out << num(r.sparsity) << ',' << num(r.dense_widened_ns) << ',' << num(r.masked_dense_ns)
        << ',' << num(r.compressed_ns) << ',' << num(r.speedup()) << '\n';
  }
  return out.str();
}

nlohmann::json bench_json(const BenchResult& result) {
  const auto& c = result.config;
  nlohmann::json rows = nlohmann::json::array();
  for (const auto& r : result.rows) {
    rows.push_back({{"sparsity", r.sparsity},
                    {"effective_sparsity", r.effective_sparsity},
                    {"wide_in", r.wide_in},
                    {"wide_out", r.wide_out},
                    {"active", r.active},
                    {"positions", r.positions},
                    {"dense_widened_macs", r.dense_widened_macs},
                    {"masked_dense_macs", r.masked_dense_macs},
                    {"compressed_macs", r.compressed_macs},
                    {"mac_ratio_exact", r.mac_ratio_exact()},
                    {"dense_widened_ns", r.dense_widened_ns},
                    {"masked_dense_ns", r.masked_dense_ns},
                    {"compressed_ns", r.compressed_ns},
                    {"speedup", r.speedup()},
                    {"compressed_macs_per_ns", r.compressed_macs_per_ns()}});
  }
  return {{"case",
           {{"d_in", c.d_in},
            {"d_out", c.d_out},
            {"batch", c.batch},
            {"transform", c.transform},
            {"repetitions", c.repetitions},
            {"warmup", c.warmup},
            {"training", c.training},
            {"seed", c.seed}}},
          {"threads", result.threads},
          {"rows", rows}};
}

void emit_bench_table(const BenchResult& result, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create " + dir.string() + ": " + ec.message());
  auto write = [](const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p, std::ios::trunc);
    out << text;
    out.flush();
    if (!out) throw Error("cannot write " + p.string());
  };
  write(dir / "bench.csv", bench_csv(result));
  write(dir / "bench.json", bench_json(result).dump(2) + "\n");
}

}  // namespace forge::bench
