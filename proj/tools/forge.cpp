// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

// forge: plan, train, evaluate, audit and benchmark sparse iso-FLOP networks.
//
// Exit codes: 0 success, 1 invalid input, 2 runtime failure.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "forge/bench.hpp"
#include "forge/checkpoint.hpp"
#include "forge/config.hpp"
#include "forge/error.hpp"
#include "forge/glyphs.hpp"
#include "forge/plan_json.hpp"
#include "forge/report.hpp"
#include "forge/trainer.hpp"

namespace {

using namespace forge;

planner::NetworkPlan plan_for(const trainer::TrainConfig& c) {
  auto plan = planner::plan_network(c.layers, c.request);
  if (c.redistribute) plan = planner::redistribute_sparsity(plan, plan.baseline_total_macs);
  return plan;
}

int cmd_plan(const std::string& path, bool as_json) {
  const auto config = trainer::load_config(path);
  const auto plan = plan_for(config);
  if (as_json) {
    std::cout << planner::to_json(plan).dump(2) << '\n';
    return 0;
  }
  std::printf("%-5s %-18s %8s %8s %8s %12s %12s %10s %14s\n", "layer", "transform", "d_in",
              "d_out", "inner", "dense_macs", "plan_macs", "s_eff", "cardinality");
  for (std::size_t i = 0; i < plan.layers.size(); ++i) {
    const auto& [spec, p] = plan.layers[i];
    std::printf("%-5zu %-18s %8lld %8lld %8lld %12lld %12lld %10.6f %14lld\n", i,
                std::string(planner::to_string(p.transform)).c_str(),
                static_cast<long long>(p.rounded.d_in), static_cast<long long>(p.rounded.d_out),
                static_cast<long long>(p.rounded.inner),
                static_cast<long long>(planner::flop_count(spec)),
                static_cast<long long>(p.predicted_macs), p.effective_sparsity,
                static_cast<long long>(p.cardinality));
  }
  std::printf("total: baseline %lld MACs, planned %lld MACs, cardinality %lld",
              static_cast<long long>(plan.baseline_total_macs),
              static_cast<long long>(plan.planned_total_macs),
              static_cast<long long>(plan.total_cardinality()));
  if (plan.redistributed_sparsity) std::printf(", re-solved sparsity %.6f", *plan.redistributed_sparsity);
  std::printf("\n");
  return 0;
}

int cmd_train(const std::string& path) {
  const auto config = trainer::load_config(path);
  const auto run = trainer::train(config);
  for (const auto& e : run.epochs) {
    std::printf("epoch %lld  train_loss %.6f  test_loss %.6f  %s %.6f\n",
                static_cast<long long>(e.epoch), e.train_loss, e.test.loss,
                e.test.classification ? "test_acc" : "test_mse", e.test.metric);
  }
  std::printf("forward MACs: %lld cumulative, %lld per sample (planned %lld, baseline %lld); "
              "threads %d\n",
              static_cast<long long>(run.cumulative_macs),
              static_cast<long long>(run.measured_macs), static_cast<long long>(run.planned_macs),
              static_cast<long long>(run.baseline_macs), run.threads);
  if (!config.output_dir.empty()) {
    trainer::emit_report(run, config, config.output_dir);
    std::printf("report written to %s\n", config.output_dir.string().c_str());
  }
  return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& dataset_path) {
  const auto ck = trainer::load_checkpoint(ckpt_path);
  const std::filesystem::path dp(dataset_path);
  const auto spec =
      trainer::parse_dataset_spec(trainer::read_json_file(dp), dp.parent_path(), "dataset");
  const auto seed = ck.meta.value("data_seed", std::uint64_t{0});
  const auto data = trainer::load_dataset(spec, seed);
  const auto r = trainer::evaluate_checkpoint(ck, data.test);
  nlohmann::json out = {{"samples", r.samples},
                        {"loss", r.loss},
                        {r.classification ? "accuracy" : "mse", r.metric}};
  std::cout << out.dump(2) << '\n';
  return 0;
}

int cmd_audit(const std::string& path) {
  const auto config = trainer::load_config(path);
  const auto rows = trainer::audit_transforms(config);
  std::printf("%-18s %9s %12s %14s %14s %12s %16s %s\n", "transform", "sparsity", "re-solved",
              "baseline_macs", "planned_macs", "rel_error", "cardinality", "note");
  for (const auto& r : rows) {
    const std::string resolved =
        r.redistributed_sparsity ? std::to_string(*r.redistributed_sparsity) : "-";
    std::printf("%-18s %9.4f %12s %14lld %14lld %12.3e %16lld %s\n", r.transform.c_str(),
                r.sparsity, resolved.c_str(), static_cast<long long>(r.baseline_macs),
                static_cast<long long>(r.planned_macs), r.relative_error,
                static_cast<long long>(r.total_cardinality), r.note.c_str());
  }
  if (!config.output_dir.empty()) {
    std::filesystem::create_directories(config.output_dir);
    trainer::write_audit_csv(rows, config.output_dir / "audit.csv");
  }
  return 0;
}

int cmd_bench(const std::string& path, const std::string& out_dir) {
  const auto c = bench::load_bench_case(path);
  const auto result = bench::bench_spmm(c);
  std::cout << bench::bench_csv(result);
  for (const auto& r : result.rows) {
    std::printf("# s=%.4g widened %lldx%lld active %lld: MACs dense %lld / compressed %lld %s\n",
                r.sparsity, static_cast<long long>(r.wide_in), static_cast<long long>(r.wide_out),
                static_cast<long long>(r.active), static_cast<long long>(r.dense_widened_macs),
                static_cast<long long>(r.compressed_macs),
                r.mac_ratio_exact() ? "(ratio exact)" : "(RATIO MISMATCH)");
  }
  std::printf("# threads %d\n", result.threads);
  if (!out_dir.empty()) bench::emit_bench_table(result, out_dir);
  for (const auto& r : result.rows) {
    if (!r.mac_ratio_exact()) return 2;
  }
  return 0;
}

int cmd_glyphs(const std::string& dir, const trainer::GlyphOptions& o) {
  trainer::write_glyph_files(trainer::make_glyphs(o), dir);
  std::printf("wrote %lld train and %lld test %lldx%lld glyphs to %s\n",
              static_cast<long long>(o.train_samples), static_cast<long long>(o.test_samples),
              static_cast<long long>(o.size), static_cast<long long>(o.size), dir.c_str());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"forge: sparse iso-FLOP transformations of dense networks"};
  app.require_subcommand(1);

  std::string config_path, ckpt_path, dataset_path, out_dir;
  bool as_json = false;
  auto* plan = app.add_subcommand("plan", "Print the iso-FLOP plan of a config");
  plan->add_option("config", config_path, "Config JSON")->required();
  plan->add_flag("--json", as_json, "Emit the plan as JSON");

  auto* train = app.add_subcommand("train", "Train the configured network and write reports");
  train->add_option("config", config_path, "Config JSON")->required();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset's test split");
  eval->add_option("checkpoint", ckpt_path, "Checkpoint file")->required();
  eval->add_option("dataset", dataset_path, "Dataset descriptor JSON")->required();

  auto* audit = app.add_subcommand("audit", "Compare every transform against the dense baseline");
  audit->add_option("config", config_path, "Config JSON")->required();

  auto* bench = app.add_subcommand("bench", "Time dense-widened, masked and compressed layers");
  bench->add_option("config", config_path, "Bench case JSON")->required();
  bench->add_option("-o,--out", out_dir, "Directory for bench.csv and bench.json");

  trainer::GlyphOptions glyph;
  auto* glyphs = app.add_subcommand("glyphs", "Write a synthetic digit-glyph IDX dataset");
  glyphs->add_option("dir", out_dir, "Output directory")->required();
  glyphs->add_option("--seed", glyph.seed, "Generator seed")->required();
  glyphs->add_option("--size", glyph.size, "Image side in pixels");
  glyphs->add_option("--train", glyph.train_samples, "Training samples");
  glyphs->add_option("--test", glyph.test_samples, "Test samples");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 1;
  }

  try {
    if (*plan) return cmd_plan(config_path, as_json);
    if (*train) return cmd_train(config_path);
    if (*eval) return cmd_eval(ckpt_path, dataset_path);
    if (*audit) return cmd_audit(config_path);
    if (*bench) return cmd_bench(config_path, out_dir);
    if (*glyphs) return cmd_glyphs(out_dir, glyph);
  } catch (const forge::ValidationError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const forge::ShapeError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
