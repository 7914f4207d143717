// Copyright 2026 The Forge Authors
// SPDX-License-Identifier: Apache-2.0

#include "forge/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <numeric>

#include "forge/error.hpp"
#include "forge/optim.hpp"
#include "forge/plan_json.hpp"
#include "forge/rng.hpp"

namespace forge::trainer {

using network::Network;
using tensor::Mode;
using tensor::Tape;
using tensor::Var;

int requested_threads() {
  const char* env = std::getenv("FORGE_THREADS");
  if (env == nullptr || *env == '\0') return 1;
  char* end = nullptr;
  const long n = std::strtol(env, &end, 10);
  if (*end != '\0' || n < 1) throw ValidationError("FORGE_THREADS must be a positive integer");
  return static_cast<int>(n);
}

namespace {

template <typename T>
Var gather_inputs(Tape<T>& tape, const Split& split, std::span<const std::size_t> rows) {
  const auto f = static_cast<std::size_t>(split.features);
  std::vector<T> x(rows.size() * f);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const float* src = split.x.data() + rows[r] * f;
    std::copy(src, src + f, x.begin() + static_cast<std::ptrdiff_t>(r * f));
  }
  return tape.constant({rows.size(), f}, std::move(x));
}

template <typename T>
Var batch_loss(Tape<T>& tape, Var out, const Split& split, std::span<const std::size_t> rows,
               std::vector<std::int32_t>& labels, std::vector<T>& targets) {
  if (split.classification) {
    labels.resize(rows.size());
    for (std::size_t r = 0; r < rows.size(); ++r) labels[r] = split.labels[rows[r]];
    return tensor::softmax_cross_entropy(tape, out, std::span<const std::int32_t>(labels));
  }
  const auto o = static_cast<std::size_t>(split.outputs);
  targets.resize(rows.size() * o);
  for (std::size_t r = 0; r < rows.size(); ++r) {
    for (std::size_t k = 0; k < o; ++k) targets[r * o + k] = split.targets[rows[r] * o + k];
  }
  return tensor::mse_loss(tape, out, std::span<const T>(targets));
}

void check_compatible(const Split& split, std::int64_t in, std::int64_t out) {
  if (split.features != in) {
    throw ShapeError("dataset has " + std::to_string(split.features) +
                     " features, the network expects " + std::to_string(in));
  }
  const std::int64_t want = split.classification ? split.classes : split.outputs;
  if (want != out) {
    throw ShapeError("dataset has " + std::to_string(want) + (split.classification ? " classes" : " outputs") +
                     ", the network produces " + std::to_string(out));
  }
}

nlohmann::json checkpoint_meta(const TrainConfig& config, const planner::NetworkPlan& plan,
                               std::int64_t epoch, std::int64_t step) {
  return {{"plan", planner::to_json(plan)},
          {"activation", planner::to_string(config.activation)},
          {"model_seed", config.seeds.model},
          {"mask_seed", config.seeds.mask},
          {"data_seed", config.seeds.data},
          {"execution", network::to_string(config.path)},
          {"precision", config.precision == Precision::f64 ? "f64" : "f32"},
          {"batch_size", config.optimizer.batch_size},
          {"epoch", epoch},
          {"step", step}};
}

network::BuildOptions options_from_meta(const nlohmann::json& meta) {
  network::BuildOptions o;
  try {
    o.model_seed = meta.at("model_seed").get<std::uint64_t>();
    o.mask_seed = meta.at("mask_seed").get<std::uint64_t>();
    o.activation = planner::parse_nonlinearity(meta.at("activation").get<std::string>());
    o.path = network::parse_exec_path(meta.at("execution").get<std::string>());
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("checkpoint meta is incomplete: ") + e.what());
  }
  return o;
}

template <typename T>
RunReport run(const TrainConfig& config, const Dataset& data) {
  const auto& opt = config.optimizer;
  const Split& train = data.train;
  if (opt.batch_size > train.samples) {
    throw ValidationError("optimizer.batch_size " + std::to_string(opt.batch_size) +
                          " exceeds the " + std::to_string(train.samples) + " training samples");
  }

  RunReport report;
  report.threads = requested_threads();
  report.config = to_json(config);

  planner::NetworkPlan plan = planner::plan_network(config.layers, config.request);
  if (config.redistribute) plan = planner::redistribute_sparsity(plan, plan.baseline_total_macs);
  report.plan = planner::to_json(plan);
  report.baseline_macs = plan.baseline_total_macs;
  report.planned_macs = plan.planned_total_macs;
  report.total_cardinality = plan.total_cardinality();

  network::BuildOptions build{config.seeds.model, config.seeds.mask, config.activation, config.path};
  auto net = Network<T>::build(plan, build);
  if (!config.init_checkpoint.empty()) restore(net, load_checkpoint(config.init_checkpoint));
  if (config.fine_tune == FineTune::densify) {
    for (auto& m : net.masks()) mask::densify(m);
    net.apply_masks();
  }
  check_compatible(train, net.input_features(), net.output_features());
  check_compatible(data.test, net.input_features(), net.output_features());

  const std::int64_t steps_per_epoch = train.samples / opt.batch_size;
  mask::MaskSchedule schedule = config.schedule;
  if (config.fine_tune != FineTune::none) schedule.method = mask::Method::fixed;
  schedule.total_steps = opt.epochs * steps_per_epoch;
  schedule.validate();
  report.total_steps = schedule.total_steps;

  report.initial_masks = net.masks();
  report.mask_names = net.mask_names();
  report.initial_train_loss = evaluate(net, train, opt.batch_size).loss;

  const tensor::SgdConfig sgd_base{opt.lr_peak, opt.momentum, opt.weight_decay, opt.nesterov};
  const auto batch = static_cast<std::size_t>(opt.batch_size);
  const std::uint64_t shuffle_key = derive_key(config.seeds.data, "shuffle");
  const std::uint64_t set_key = derive_key(config.seeds.mask, "set-growth");
  std::vector<std::size_t> order(static_cast<std::size_t>(train.samples));
  std::vector<std::int32_t> labels;
  std::vector<T> targets;
  Tape<T> tape;
  tape.set_check_finite(config.check_finite);
  std::int64_t step = 0;

  for (std::int64_t epoch = 1; epoch <= opt.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    CounterRng shuffle(derive_key(shuffle_key, static_cast<std::uint64_t>(epoch)));
    for (std::size_t i = order.size(); i > 1; --i) {
      std::swap(order[i - 1], order[shuffle.bounded(i)]);
    }
    double epoch_loss = 0.0;
    for (std::int64_t b = 0; b < steps_per_epoch; ++b) {
      ++step;
      const std::span<const std::size_t> rows(order.data() + static_cast<std::size_t>(b) * batch,
                                              batch);
      const bool update = !net.masks().empty() && mask::update_due(schedule, step);
      const double lr = tensor::cosine_lr(step - 1, schedule.total_steps, opt.lr_peak, opt.lr_min);

      tape.clear();
      tape.reset_macs();
      net.set_surface_dense_grads(update && schedule.method == mask::Method::rigl);
      Var x = gather_inputs(tape, train, rows);
      Var out = net.forward(tape, x, Mode::train);
      const auto step_macs = static_cast<std::int64_t>(tape.macs());
      Var loss = batch_loss(tape, out, train, rows, labels, targets);
      const double loss_value = static_cast<double>(tape.value(loss)[0]);
      if (!std::isfinite(loss_value)) {
        throw NumericError("non-finite loss at step " + std::to_string(step));
      }
      if (step == 1) {
        report.measured_macs = step_macs / opt.batch_size;
        const auto& per_layer = net.last_layer_macs();
        for (std::size_t i = 0; i < plan.layers.size(); ++i) {
          const auto& pl = plan.layers[i];
          LayerAudit a;
          a.index = static_cast<std::int64_t>(i);
          a.transform = std::string(planner::to_string(pl.plan.transform));
          a.dense_macs = planner::flop_count(pl.spec);
          a.planned_macs = pl.plan.predicted_macs;
          a.measured_macs = static_cast<std::int64_t>(per_layer[i]) / opt.batch_size;
          a.cardinality = pl.plan.cardinality;
          a.active_weights = pl.plan.active_weights;
          a.positions = pl.plan.total_weight_positions;
          report.layers.push_back(a);
        }
      }
      report.cumulative_macs += step_macs;

      tape.backward(loss);
      net.collect_grads(tape);
      tensor::SgdConfig sgd = sgd_base;
      sgd.lr = lr;
      for (auto& p : net.params()) {
        std::span<const std::uint8_t> bits;
        if (p.mask >= 0 && !net.masks()[p.mask].dense()) bits = net.masks()[p.mask].bitmap();
        tensor::sgd_step<T>(p.values, p.grad, p.velocity, sgd, p.decay, bits);
      }

      const double fraction = mask::drop_fraction(schedule, step);
      if (update) {
        ++report.mask_updates;
        for (std::size_t m = 0; m < net.masks().size(); ++m) {
          auto& p = net.params()[net.mask_param(m)];
          mask::UpdateResult r;
          if (schedule.method == mask::Method::rigl) {
            r = mask::rigl_update<T>(net.masks()[m], p.values, p.grad, fraction, step, p.velocity);
          } else {
            CounterRng rng(derive_key(derive_key(set_key, static_cast<std::uint64_t>(step)), m));
            r = mask::set_update<T>(net.masks()[m], p.values, fraction, rng, step, p.velocity);
          }
          report.mask_events.push_back({step, net.mask_names()[m], fraction,
                                        static_cast<std::int64_t>(r.dropped.size()),
                                        static_cast<std::int64_t>(r.grown.size()), r.shortfall});
        }
      }
      report.steps.push_back({step, lr, loss_value, fraction, step_macs, report.cumulative_macs});
      epoch_loss += loss_value;
    }

    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = steps_per_epoch > 0 ? epoch_loss / static_cast<double>(steps_per_epoch) : 0.0;
    rec.test = evaluate(net, data.test, opt.batch_size);
    rec.cumulative_macs = report.cumulative_macs;
    report.epochs.push_back(rec);

    if (config.write_checkpoints && !config.output_dir.empty()) {
      std::filesystem::create_directories(config.output_dir);
      const auto path = config.output_dir / ("checkpoint-epoch" + std::to_string(epoch) + ".sift");
      save_checkpoint(path, snapshot(net, checkpoint_meta(config, plan, epoch, step)));
      report.final_checkpoint = path;
    }
  }

  report.final_masks = net.masks();
  report.active_params = net.param_count(true);
  report.total_params = net.param_count(false);
  report.final_train_loss = evaluate(net, train, opt.batch_size).loss;
  report.final_test = report.epochs.empty() ? evaluate(net, data.test, opt.batch_size)
                                            : report.epochs.back().test;
  report.backward_macs_estimate = 2 * report.cumulative_macs;
  return report;
}

}  // namespace

template <typename T>
EvalResult evaluate(Network<T>& net, const Split& split, std::int64_t batch_size) {
  if (batch_size < 1) throw ValidationError("evaluation batch size must be positive");
  check_compatible(split, net.input_features(), net.output_features());
  EvalResult result;
  result.classification = split.classification;
  result.samples = split.samples;
  if (split.samples == 0) return result;
  const auto n = static_cast<std::size_t>(split.samples);
  std::vector<std::size_t> rows(n);
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  std::vector<std::int32_t> labels;
  std::vector<T> targets;
  double loss_sum = 0.0, metric_sum = 0.0;
  const bool dense_grads = net.surface_dense_grads();
  net.set_surface_dense_grads(false);
  Tape<T> tape;
  for (std::size_t start = 0; start < n; start += static_cast<std::size_t>(batch_size)) {
    const std::size_t count = std::min(n - start, static_cast<std::size_t>(batch_size));
    const std::span<const std::size_t> chunk(rows.data() + start, count);
    tape.clear();
    Var out = net.forward(tape, gather_inputs(tape, split, chunk), Mode::eval);
    Var loss = batch_loss(tape, out, split, chunk, labels, targets);
    const double l = static_cast<double>(tape.value(loss)[0]);
    loss_sum += l * static_cast<double>(count);
    if (split.classification) {
      const auto logits = tape.value(out);
      const auto c = static_cast<std::size_t>(split.classes);
      for (std::size_t r = 0; r < count; ++r) {
        const auto* row = logits.data() + r * c;
        const auto best = static_cast<std::int32_t>(std::max_element(row, row + c) - row);
        if (best == labels[r]) metric_sum += 1.0;
      }
    } else {
      metric_sum += l * static_cast<double>(count);
    }
  }
  net.set_surface_dense_grads(dense_grads);
  result.loss = loss_sum / static_cast<double>(n);
  result.metric = metric_sum / static_cast<double>(n);
  return result;
}

template <typename T>
Network<T> rebuild(const Checkpoint& checkpoint) {
  if (!checkpoint.meta.contains("plan")) throw FormatError("checkpoint meta has no plan");
  auto net = Network<T>::build(planner::network_plan_from_json(checkpoint.meta.at("plan")),
                               options_from_meta(checkpoint.meta));
  restore(net, checkpoint);
  return net;
}

EvalResult evaluate_checkpoint(const Checkpoint& checkpoint, const Split& split) {
  const auto batch = checkpoint.meta.value("batch_size", std::int64_t{64});
  if (checkpoint.meta.value("precision", std::string("f32")) == "f64") {
    auto net = rebuild<double>(checkpoint);
    return evaluate(net, split, batch);
  }
  auto net = rebuild<float>(checkpoint);
  return evaluate(net, split, batch);
}

RunReport train(const TrainConfig& config, const Dataset& data) {
  if (config.precision == Precision::f64) return run<double>(config, data);
  return run<float>(config, data);
}

RunReport train(const TrainConfig& config) {
  return train(config, load_dataset(config.dataset, config.seeds.data));
}

template EvalResult evaluate<float>(Network<float>&, const Split&, std::int64_t);
template EvalResult evaluate<double>(Network<double>&, const Split&, std::int64_t);
template Network<float> rebuild<float>(const Checkpoint&);
template Network<double> rebuild<double>(const Checkpoint&);

}  // namespace forge::trainer
