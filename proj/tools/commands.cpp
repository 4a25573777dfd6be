// Copyright 2026 The dlka Authors.
// SPDX-License-Identifier: Apache-2.0

#include "commands.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>

#include "dlka/bench.hpp"
#include "dlka/cost_model.hpp"
#include "dlka/gradcheck.hpp"
#include "dlka/io.hpp"

namespace dlka::cli {

namespace fs = std::filesystem;

namespace {

std::string numbered(const std::string& dir, const char* stem, size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%s_%04zu.dlkv", stem, i);
  return (fs::path(dir) / buf).string();
}

}  // namespace

void save_dataset(const std::string& dir, const std::vector<Sample>& data) {
  fs::create_directories(dir);
  for (size_t i = 0; i < data.size(); ++i) {
    raster_write(numbered(dir, "image", i), raster_from_tensor(data[i].image));
    raster_write(numbered(dir, "label", i), raster_from_labels(data[i].label));
  }
}

std::vector<Sample> load_dataset(const std::string& dir) {
  if (!fs::is_directory(dir)) throw ValidationError("no data directory '" + dir + "'");
  std::vector<Sample> out;
  for (size_t i = 0;; ++i) {
    const std::string img = numbered(dir, "image", i);
    if (!fs::exists(img)) break;
    Sample s;
    s.image = raster_to_tensor(raster_read(img));
    s.label = raster_to_labels(raster_read(numbered(dir, "label", i)));
    if (s.image.rank() < 3 || s.image.dim(0) != 1 || s.image.dim(1) != 1) {
      throw ShapeError("dataset: '" + img + "' must have shape (1, 1, spatial...)");
    }
    Shape expect(s.image.shape().begin() + 1, s.image.shape().end());
    if (s.label.shape != expect) {
      throw ShapeError("dataset: label " + std::to_string(i) + " has shape " +
                       shape_str(s.label.shape) + ", expected " + shape_str(expect));
    }
    s.seed = i;
    out.push_back(std::move(s));
  }
  if (out.empty()) throw ValidationError("dataset: no samples in '" + dir + "'");
  return out;
}

namespace {

struct Globals {
  std::optional<std::uint64_t> seed;
  bool deterministic = false;
};

struct ConfigArgs {
  std::string path;
  std::vector<std::string> set;

  void add(CLI::App* cmd) {
    cmd->add_option("--config", path, "Config file (key=value with [sections])");
    cmd->add_option("--set", set, "Override one key, e.g. --set lka.K=13");
  }
  Config load() const {
    return path.empty() ? config_parse("", set) : config_load(path, set);
  }
};

std::string join_csv(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  for (size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

std::string fmt_opt(const std::optional<double>& v) {
  if (!v) return "nan";
  std::ostringstream os;
  os.precision(17);
  os << *v;
  return os.str();
}

std::vector<Sample> dataset_for(const Config& c, const std::string& dir) {
  if (!dir.empty()) return load_dataset(dir);
  return synth_generate(c.net.rank, c.data.count, c.data.dims, c.net.num_classes,
                        c.train.seed);
}

// cost ----------------------------------------------------------------------

struct CostArgs {
  int rank = 2;
  Count K = 21;
  Count d = 3;
  std::vector<Count> channels{32, 64, 128, 256, 512};
  std::string bias = "table";
  Count k_dw = 5;
  Count k_dwd = 7;
  std::vector<Count> spatial;
  bool csv = false;
  bool optimal = false;
};

int cmd_cost(const CostArgs& a, std::ostream& out) {
  CostQuery q;
  q.rank = a.rank;
  q.K = a.K;
  q.d = a.d;
  q.k_dw = a.k_dw;
  q.k_dwd = a.k_dwd;
  q.spatial = a.spatial;
  q.bias_mode = a.bias == "eq3" ? BiasMode::kEq3 : BiasMode::kTable;
  if (a.optimal) {
    const DilationChoice c = optimal_dilation(a.K, a.channels.empty() ? 32 : a.channels[0]);
    out << "K,d_star,d_int\n" << a.K << ',' << std::setprecision(17) << c.d_star << ','
        << c.d_int << '\n';
    return kOk;
  }
  const CostReport r = cost_table(a.channels, q);
  out << (a.csv ? cost_table_csv(r) : format_cost_table(r));
  return kOk;
}

// gradcheck -----------------------------------------------------------------

struct GradArgs {
  std::vector<std::string> ops;
  int seeds = 5;
  double h = 1e-5;
  double threshold = 1e-4;
  Index max_elements = 256;
  bool csv = false;
  bool list = false;
};

int cmd_gradcheck(const GradArgs& a, const Globals& g, std::ostream& out) {
  const auto& cases = gradcheck_cases();
  if (a.list) {
    for (const auto& c : cases) out << c.name << '\n';
    return kOk;
  }
  std::vector<const GradCase*> chosen;
  for (const auto& c : cases) {
    if (a.ops.empty() || std::find(a.ops.begin(), a.ops.end(), c.name) != a.ops.end()) {
      chosen.push_back(&c);
    }
  }
  for (const std::string& name : a.ops) {
    if (std::none_of(cases.begin(), cases.end(),
                     [&](const GradCase& c) { return c.name == name; })) {
      throw ValidationError("gradcheck: unknown op '" + name + "' (see --list)");
    }
  }
  GradCheckOptions opts;
  opts.h = static_cast<real>(a.h);
  opts.threshold = static_cast<real>(a.threshold);
  opts.max_elements = a.max_elements;
  const std::uint64_t base = g.seed.value_or(0);
  bool all = true;
  if (a.csv) out << gradreport_csv_header() << '\n';
  for (const GradCase* c : chosen) {
    for (int s = 0; s < a.seeds; ++s) {
      const GradReport r = c->run(base + static_cast<std::uint64_t>(s), opts);
      all = all && r.pass;
      if (a.csv) {
        out << gradreport_csv_rows(r);
      } else {
        out << std::left << std::setw(40) << r.op << " seed " << r.seed << "  max rel err "
            << std::scientific << std::setprecision(3) << r.max_rel_err
            << std::defaultfloat << (r.pass ? "  PASS" : "  FAIL") << '\n';
      }
    }
  }
  return all ? kOk : kValidation;
}

// synth ---------------------------------------------------------------------

struct SynthArgs {
  int rank = 3;
  Index count = 0;
  std::vector<Index> dims;
  Index classes = 3;
  std::string out;
};

int cmd_synth(const SynthArgs& a, const Globals& g, std::ostream& out) {
  Shape dims = a.dims;
  if (dims.empty()) dims = DataConfig::defaults(a.rank).dims;
  if (static_cast<int>(dims.size()) != a.rank) {
    throw ValidationError("synth: --dims needs " + std::to_string(a.rank) + " extents");
  }
  const Index n = a.count > 0 ? a.count : DataConfig::defaults(a.rank).count;
  const auto data = synth_generate(a.rank, n, dims, a.classes, g.seed.value_or(0));
  save_dataset(a.out, data);
  out << "wrote " << data.size() << " samples to " << a.out << '\n';
  return kOk;
}

// train ---------------------------------------------------------------------

struct TrainArgs {
  ConfigArgs config;
  std::string data;
  std::string checkpoint;
  std::string resume;
  std::string log;
  std::optional<Index> epochs;
};

int cmd_train(const TrainArgs& a, const Globals& g, std::ostream& out) {
  TrainState state;
  DataConfig data_cfg;
  if (!a.resume.empty()) {
    if (!a.config.path.empty() || !a.config.set.empty()) {
      throw CLI::ValidationError("--resume takes its config from the checkpoint");
    }
    state = state_from_checkpoint(checkpoint_load(a.resume), &data_cfg);
    if (g.seed && *g.seed != state.train.seed) {
      throw ValidationError("train: --seed differs from the checkpoint seed");
    }
  } else {
    Config c = a.config.load();
    if (g.seed) c.train.seed = *g.seed;
    data_cfg = c.data;
    state = train_init(c.net, c.train);
  }
  if (a.epochs) state.train.epochs = *a.epochs;
  const Config cfg{state.net, state.train, data_cfg};
  const auto data = dataset_for(cfg, a.data);

  std::ofstream log;
  if (!a.log.empty()) {
    log.open(a.log, a.resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw ValidationError("cannot write '" + a.log + "'");
  }
  const std::string header = metric_csv_header(state.net.num_classes);
  out << header << '\n';
  if (log.is_open() && a.resume.empty()) log << header << '\n';
  const Index remaining = std::max<Index>(state.train.epochs - state.epoch, 0);
  train_loop(state, data, remaining, [&](const EpochLog& l) {
    const std::string row = metric_csv_row(l);
    out << row << '\n' << std::flush;
    if (log.is_open()) log << row << '\n' << std::flush;
  });
  if (!a.checkpoint.empty()) {
    checkpoint_save(a.checkpoint, checkpoint_from_state(state, data_cfg));
  }
  return kOk;
}

// eval / infer --------------------------------------------------------------

struct EvalArgs {
  std::string checkpoint;
  std::string data;
  std::string split = "val";
  bool hd95 = true;
};

int cmd_eval(const EvalArgs& a, const Globals& g, std::ostream& out) {
  DataConfig data_cfg;
  const TrainState state = state_from_checkpoint(checkpoint_load(a.checkpoint), &data_cfg);
  Config cfg{state.net, state.train, data_cfg};
  if (g.seed) cfg.train.seed = *g.seed;
  const auto data = dataset_for(cfg, a.data);
  std::vector<Index> idx;
  if (a.split == "all") {
    idx.resize(data.size());
    std::iota(idx.begin(), idx.end(), Index{0});
  } else {
    idx = split_dataset(static_cast<Index>(data.size()), cfg.train.val_fraction,
                        cfg.train.seed)
              .val;
  }
  const EvalResult r = evaluate(state.params, state.net, data, idx, a.hd95);
  std::string header = "samples,dice_mean";
  for (Index c = 1; c < state.net.num_classes; ++c) header += ",dice_c" + std::to_string(c);
  out << header << ",hd95_mean\n";
  std::ostringstream row;
  row.precision(17);
  row << idx.size() << ',' << r.dice_mean << ',' << join_csv(r.dice) << ','
      << fmt_opt(r.hd95_mean);
  out << row.str() << '\n';
  return kOk;
}

struct InferArgs {
  std::string checkpoint;
  std::string input;
  std::string output;
};

int cmd_infer(const InferArgs& a, std::ostream& out) {
  const TrainState state = state_from_checkpoint(checkpoint_load(a.checkpoint));
  const Tensor x = raster_to_tensor(raster_read(a.input));
  if (x.rank() != state.net.rank + 2 || x.dim(1) != state.net.in_channels) {
    throw ShapeError("infer: input must be (N, " + std::to_string(state.net.in_channels) +
                     ", spatial...) of rank " + std::to_string(state.net.rank + 2) +
                     ", got " + shape_str(x.shape()));
  }
  state.net.check_input(Shape(x.shape().begin() + 2, x.shape().end()));
  Tensor logits;
  {
    NoGradGuard guard;
    logits = net_forward(Var::constant(x), state.params, state.net).value();
  }
  const LabelMap labels = argmax_labels(logits);
  raster_write(a.output, raster_from_labels(labels));
  out << "wrote labels " << shape_str(labels.shape) << " to " << a.output << '\n';
  return kOk;
}

// bench ---------------------------------------------------------------------

struct BenchArgs {
  ConfigArgs config;
  std::vector<Index> batch{1};
  Index warmup = 50;
  Index repetitions = 1000;
  std::optional<int> threads;
  std::vector<Index> dims;
  std::string out;
};

int cmd_bench(const BenchArgs& a, const Globals& g, std::ostream& out) {
  const Config c = a.config.load();
  BenchOptions o;
  o.batch_sizes = a.batch;
  o.warmup = a.warmup;
  o.repetitions = a.repetitions;
  o.threads = g.deterministic ? 1 : resolve_threads(a.threads);
  o.seed = g.seed.value_or(c.train.seed);
  o.dims = a.dims.empty() ? c.data.dims : Shape(a.dims.begin(), a.dims.end());
  std::ostringstream csv;
  csv << bench_csv_header() << '\n';
  for (const BenchRow& r : bench_run(c.net, o)) csv << bench_csv_row(r) << '\n';
  if (a.out.empty()) {
    out << csv.str();
  } else {
    write_file(a.out, csv.str());
  }
  return kOk;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Deformable large kernel attention networks"};
  app.name("dlka");
  app.require_subcommand(1);
  app.fallthrough();
  Globals g;
  app.add_option("--seed", g.seed, "Seed for data, initialization and sampling");
  app.add_flag("--deterministic", g.deterministic, "Force one thread");

  CostArgs cost;
  auto* c_cost = app.add_subcommand("cost", "Parameter and FLOP table");
  c_cost->add_option("--rank", cost.rank)->check(CLI::IsMember({2, 3}));
  c_cost->add_option("-K,--K", cost.K)->check(CLI::PositiveNumber);
  c_cost->add_option("-d,--d", cost.d)->check(CLI::PositiveNumber);
  c_cost->add_option("--channels", cost.channels)->delimiter(',');
  c_cost->add_option("--bias-mode,--bias", cost.bias)->check(CLI::IsMember({"table", "eq3"}));
  c_cost->add_option("--k-dw", cost.k_dw)->check(CLI::PositiveNumber);
  c_cost->add_option("--k-dwd", cost.k_dwd)->check(CLI::PositiveNumber);
  c_cost->add_option("--spatial", cost.spatial, "Extents for FLOPs")->delimiter(',');
  c_cost->add_flag("--csv", cost.csv);
  c_cost->add_flag("--optimal", cost.optimal, "Print the optimal dilation for --K");

  GradArgs grad;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference gradient checks");
  c_grad->add_option("--op", grad.ops, "Case name (repeatable); default all");
  c_grad->add_option("--seeds", grad.seeds)->check(CLI::PositiveNumber);
  c_grad->add_option("--step", grad.h, "Difference step h")->check(CLI::PositiveNumber);
  c_grad->add_option("--threshold", grad.threshold)->check(CLI::PositiveNumber);
  c_grad->add_option("--max-elements", grad.max_elements)->check(CLI::PositiveNumber);
  c_grad->add_flag("--csv", grad.csv);
  c_grad->add_flag("--list", grad.list);

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("synth", "Write a synthetic dataset");
  c_synth->add_option("--rank", synth.rank)->check(CLI::IsMember({2, 3}));
  c_synth->add_option("--count", synth.count)->check(CLI::NonNegativeNumber);
  c_synth->add_option("--dims", synth.dims)->delimiter(',');
  c_synth->add_option("--classes", synth.classes)->check(CLI::Range(2, 255));
  c_synth->add_option("--out", synth.out)->required();

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train on synthetic or stored data");
  train.config.add(c_train);
  c_train->add_option("--data", train.data, "Dataset directory (default: synthesize)");
  c_train->add_option("--checkpoint", train.checkpoint, "Write a checkpoint here");
  c_train->add_option("--resume", train.resume, "Continue from this checkpoint");
  c_train->add_option("--log", train.log, "Metric CSV path");
  c_train->add_option("--epochs", train.epochs, "Total epochs")->check(CLI::NonNegativeNumber);

  EvalArgs eval;
  auto* c_eval = app.add_subcommand("eval", "Dice and HD95 of a checkpoint");
  c_eval->add_option("--checkpoint", eval.checkpoint)->required();
  c_eval->add_option("--data", eval.data);
  c_eval->add_option("--split", eval.split)->check(CLI::IsMember({"val", "all"}));
  c_eval->add_flag("!--no-hd95", eval.hd95);

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "Label a raster volume");
  c_infer->add_option("--checkpoint", infer.checkpoint)->required();
  c_infer->add_option("--input", infer.input)->required();
  c_infer->add_option("--output", infer.output)->required();

  BenchArgs bench;
  auto* c_bench = app.add_subcommand("bench", "Inference timing");
  bench.config.add(c_bench);
  c_bench->add_option("--batch", bench.batch)->delimiter(',');
  c_bench->add_option("--warmup", bench.warmup)->check(CLI::NonNegativeNumber);
  c_bench->add_option("--repetitions", bench.repetitions)->check(CLI::NonNegativeNumber);
  c_bench->add_option("--threads", bench.threads)->check(CLI::PositiveNumber);
  c_bench->add_option("--dims", bench.dims)->delimiter(',');
  c_bench->add_option("--out", bench.out, "CSV path (default stdout)");

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e, out, err);
    return rc == 0 ? kOk : kUsage;
  }
  try {
    if (c_cost->parsed()) return cmd_cost(cost, out);
    if (c_grad->parsed()) return cmd_gradcheck(grad, g, out);
    if (c_synth->parsed()) return cmd_synth(synth, g, out);
    if (c_train->parsed()) return cmd_train(train, g, out);
    if (c_eval->parsed()) return cmd_eval(eval, g, out);
    if (c_infer->parsed()) return cmd_infer(infer, out);
    if (c_bench->parsed()) return cmd_bench(bench, g, out);
  } catch (const CLI::Error& e) {
    err << "error: " << e.what() << '\n';
    return kUsage;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kDivergence;
  } catch (const std::invalid_argument& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::runtime_error& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kValidation;
  }
  return kUsage;
}

}  // namespace dlka::cli
