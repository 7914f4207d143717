// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/report.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "forge/error.hpp"
#include "forge/planner.hpp"

namespace forge::trainer {

namespace {

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

void finish(std::ofstream& out, const std::filesystem::path& path) {
  out.flush();
  if (!out) throw Error("failed writing " + path.string());
}

std::int64_t active_weights(const planner::NetworkPlan& plan) {
  std::int64_t total = 0;
  for (const auto& l : plan.layers) {
    for (const auto& s : l.plan.slots) total += s.active;
  }
  return total;
}

}  // namespace

std::vector<AuditRow> audit_transforms(const TrainConfig& config) {
  using planner::TransformKind;
  const TransformKind kinds[] = {TransformKind::dense, TransformKind::sparse_wide,
                                 TransformKind::sparse_parallel, TransformKind::sparse_factorized,
                                 TransformKind::sparse_doped};
  const bool low_rank = config.request.transform == TransformKind::low_rank_dense;
  const double s = low_rank ? 0.0 : config.request.sparsity;
  std::vector<AuditRow> rows;
  for (TransformKind kind : kinds) {
    AuditRow row;
    row.transform = std::string(planner::to_string(kind));
    row.sparsity = kind == TransformKind::dense ? 0.0 : s;
    planner::NetworkRequest request = config.request;
    request.transform = kind;
    request.sparsity = row.sparsity;
    try {
      auto plan = planner::plan_network(config.layers, request);
      const bool resolve =
          kind != TransformKind::dense && (kind == TransformKind::sparse_wide || config.redistribute);
      if (resolve) {
        try {
          plan = planner::redistribute_sparsity(plan, plan.baseline_total_macs);
        } catch (const InfeasiblePlanError& e) {
          row.note = e.what();
        }
      }
      row.redistributed_sparsity = plan.redistributed_sparsity;
      row.baseline_macs = plan.baseline_total_macs;
      row.planned_macs = plan.planned_total_macs;
      row.relative_error = row.baseline_macs > 0
                               ? std::abs(static_cast<double>(row.planned_macs - row.baseline_macs)) /
                                     static_cast<double>(row.baseline_macs)
                               : 0.0;
      row.total_cardinality = plan.total_cardinality();
      row.parameters = active_weights(plan);
    } catch (const Error& e) {
      row.note = e.what();
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_metrics_csv(const RunReport& run, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << kMetricsHeader << '\n';
  for (const auto& s : run.steps) {
    out << s.step << ',' << num(s.loss) << ',' << num(s.lr) << ',' << s.cumulative_macs << '\n';
  }
  finish(out, path);
}

void write_audit_csv(const std::vector<AuditRow>& rows, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << kAuditHeader << '\n';
  for (const auto& r : rows) {
    std::string note = r.note;
    std::replace(note.begin(), note.end(), ',', ';');
    std::replace(note.begin(), note.end(), '\n', ' ');
    out << r.transform << ',' << num(r.sparsity) << ','
        << (r.redistributed_sparsity ? num(*r.redistributed_sparsity) : "") << ','
        << r.baseline_macs << ',' << r.planned_macs << ',' << num(r.relative_error) << ','
        << r.total_cardinality << ',' << r.parameters << ',' << note << '\n';
  }
  finish(out, path);
}

nlohmann::json summary_json(const RunReport& run) {
  using nlohmann::json;
  json layers = json::array();
  for (const auto& l : run.layers) {
    layers.push_back({{"index", l.index},
                      {"transform", l.transform},
                      {"dense_macs", l.dense_macs},
                      {"planned_macs", l.planned_macs},
                      {"measured_macs", l.measured_macs},
                      {"cardinality", l.cardinality},
                      {"active_weights", l.active_weights},
                      {"positions", l.positions}});
  }
  json epochs = json::array();
  for (const auto& e : run.epochs) {
    epochs.push_back({{"epoch", e.epoch},
                      {"train_loss", e.train_loss},
                      {"test_loss", e.test.loss},
                      {e.test.classification ? "test_accuracy" : "test_mse", e.test.metric},
                      {"cumulative_macs", e.cumulative_macs}});
  }
  json updates = json::array();
  for (const auto& m : run.mask_events) {
    updates.push_back({{"step", m.step},
                       {"mask", m.mask},
                       {"fraction", m.fraction},
                       {"dropped", m.dropped},
                       {"grown", m.grown},
                       {"shortfall", m.shortfall}});
  }
  const double rel = run.planned_macs > 0
                         ? std::abs(static_cast<double>(run.measured_macs - run.planned_macs)) /
                               static_cast<double>(run.planned_macs)
                         : 0.0;
  return {{"config", run.config},
          {"plan", run.plan},
          {"threads", run.threads},
          {"total_steps", run.total_steps},
          {"audit",
           {{"baseline_macs", run.baseline_macs},
            {"planned_macs", run.planned_macs},
            {"measured_macs", run.measured_macs},
            {"measured_vs_planned_error", rel},
            {"cumulative_forward_macs", run.cumulative_macs},
            {"backward_macs_estimate", run.backward_macs_estimate},
            {"total_cardinality", run.total_cardinality},
            {"layers", layers}}},
          {"parameters", {{"active", run.active_params}, {"total", run.total_params}}},
          {"loss", {{"initial_train", run.initial_train_loss}, {"final_train", run.final_train_loss}}},
          {"final_test",
           {{"loss", run.final_test.loss},
            {run.final_test.classification ? "accuracy" : "mse", run.final_test.metric}}},
          {"epochs", epochs},
          {"mask_updates", run.mask_updates},
          {"mask_events", updates}};
}

void write_chart_svg(const RunReport& run, const std::filesystem::path& path) {
  constexpr double W = 640, H = 360, L = 60, R = 60, T = 20, B = 40;
  const double xmax = std::max<double>(1.0, static_cast<double>(run.cumulative_macs));
  double lmax = 0.0;
  for (const auto& s : run.steps) lmax = std::max(lmax, s.loss);
  if (!(lmax > 0.0)) lmax = 1.0;
  double mmax = 0.0;
  for (const auto& e : run.epochs) mmax = std::max(mmax, e.test.metric);
  const bool accuracy = run.final_test.classification;
  if (accuracy) mmax = 1.0;
  if (!(mmax > 0.0)) mmax = 1.0;
  auto px = [&](double x) { return L + (W - L - R) * x / xmax; };
  auto py = [&](double y, double top) { return H - B - (H - T - B) * y / top; };

  std::ostringstream svg;
  svg << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H
      << "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  svg << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  svg << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B
      << "\" stroke=\"black\"/>\n";
  svg << "<text x=\"" << W / 2 << "\" y=\"" << H - 8
      << "\" text-anchor=\"middle\">cumulative forward MACs (max " << num(xmax) << ")</text>\n";
  svg << "<text x=\"12\" y=\"" << T + 10 << "\" fill=\"steelblue\">loss (max " << num(lmax)
      << ")</text>\n";
  svg << "<text x=\"" << W - R + 4 << "\" y=\"" << T + 10 << "\" fill=\"darkorange\">"
      << (accuracy ? "test acc" : "test mse") << "</text>\n";
  svg << "<polyline fill=\"none\" stroke=\"steelblue\" stroke-width=\"1\" points=\"";
  for (const auto& s : run.steps) {
    svg << num(px(static_cast<double>(s.cumulative_macs))) << ',' << num(py(s.loss, lmax)) << ' ';
  }
  svg << "\"/>\n<polyline fill=\"none\" stroke=\"darkorange\" stroke-width=\"2\" points=\"";
  for (const auto& e : run.epochs) {
    svg << num(px(static_cast<double>(e.cumulative_macs))) << ',' << num(py(e.test.metric, mmax))
        << ' ';
  }
  svg << "\"/>\n</svg>\n";
  auto out = open_out(path);
  out << svg.str();
  finish(out, path);
}

void emit_report(const RunReport& run, const TrainConfig& config, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw Error("cannot create output directory " + dir.string() + ": " + ec.message());
  write_metrics_csv(run, dir / "metrics.csv");
  {
    auto out = open_out(dir / "summary.json");
    out << summary_json(run).dump(2) << '\n';
    finish(out, dir / "summary.json");
  }
  write_audit_csv(audit_transforms(config), dir / "audit.csv");
  write_chart_svg(run, dir / "curves.svg");
}

}  // namespace forge::trainer
