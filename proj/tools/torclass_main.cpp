// torclass command-line entry point: meter, select, train, eval, synth, pipeline.

#include <CLI11.hpp>

#include <cmath>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "torclass/error.hpp"
#include "torclass/pipeline.hpp"

namespace fs = std::filesystem;
using namespace torclass;
using namespace torclass::pipeline;

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitDivergence = 4;

// Flags shared by every subcommand. Unset flags leave the config file values alone.
struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
};

struct Overrides {
  std::vector<std::string> tor, nontor, unlabeled;
  std::optional<double> activity_timeout, flow_timeout;  // seconds
  std::optional<std::string> input, output, report, spec, classifier, prefix;
  std::optional<std::string> ann_mode, kernel;
  std::optional<std::size_t> hidden, epochs, batch, patience, max_stale, max_passes;
  std::optional<double> lr, gamma, C, tol;
  bool no_select = false;
  bool no_baseline = false;
  bool reference = false;
  bool no_reference = false;
  std::vector<std::string> models;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--config", c.config, "key-value config file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "seed for split, init, SMO and synthesis");
  cmd->add_option("--out-dir", c.out_dir, "output directory");
}

void add_meter_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--tor", o.tor, "packet CSV(s) labeled Tor");
  cmd->add_option("--nontor", o.nontor, "packet CSV(s) labeled NonTor");
  cmd->add_option("--unlabeled", o.unlabeled, "packet CSV(s) without a label");
  cmd->add_option("--activity-timeout", o.activity_timeout, "active/idle threshold in seconds")
      ->check(CLI::PositiveNumber);
  cmd->add_option("--flow-timeout", o.flow_timeout, "flow expiry in seconds")->check(CLI::PositiveNumber);
}

void add_select_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_flag("--no-select", o.no_select, "skip feature selection");
  cmd->add_option("--max-stale", o.max_stale, "non-improving expansions before the search stops");
}

void add_train_flags(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--classifier", o.classifier, "ann, svm or both");
  cmd->add_option("--ann-mode", o.ann_mode, "lm or bp-sgd");
  cmd->add_option("--hidden", o.hidden, "hidden units (default 20 above 10 inputs, else 6)");
  cmd->add_option("--epochs", o.epochs, "maximum epochs or LM iterations");
  cmd->add_option("--learning-rate", o.lr, "BP learning rate");
  cmd->add_option("--batch-size", o.batch, "BP mini-batch size");
  cmd->add_option("--patience", o.patience, "validation patience");
  cmd->add_option("--kernel", o.kernel, "rbf or linear");
  cmd->add_option("--gamma", o.gamma, "rbf width (default 1/features)");
  cmd->add_option("-C,--svm-c", o.C, "SVM box constraint");
  cmd->add_option("--svm-tol", o.tol, "SMO KKT tolerance");
  cmd->add_option("--max-passes", o.max_passes, "SMO full-sweep cap");
}

std::int64_t seconds_to_us(double s) { return static_cast<std::int64_t>(std::llround(s * 1e6)); }

PipelineConfig resolve(const Common& c, const Overrides& o) {
  PipelineConfig cfg;
  if (!c.config.empty()) cfg = PipelineConfig::from_config(KvConfig::load(c.config));
  if (c.seed) cfg.apply_seed(*c.seed);
  if (c.out_dir) cfg.out_dir = *c.out_dir;

  if (!o.tor.empty() || !o.nontor.empty() || !o.unlabeled.empty()) {
    cfg.packet_files.clear();
    for (const auto& p : o.nontor) cfg.packet_files.emplace_back(p, ClassLabel::NonTor);
    for (const auto& p : o.tor) cfg.packet_files.emplace_back(p, ClassLabel::Tor);
    for (const auto& p : o.unlabeled) cfg.packet_files.emplace_back(p, ClassLabel::Unlabeled);
  }
  if (o.activity_timeout) cfg.meter.activity_timeout_us = seconds_to_us(*o.activity_timeout);
  if (o.flow_timeout) cfg.meter.flow_timeout_us = seconds_to_us(*o.flow_timeout);

  if (o.no_select) cfg.select = false;
  if (o.max_stale) cfg.search.max_stale_expansions = *o.max_stale;

  if (o.classifier) cfg.classifier = parse_classifier(*o.classifier);
  if (o.no_baseline) cfg.baseline = false;
  if (o.reference) cfg.reference = true;
  if (o.no_reference) cfg.reference = false;
  if (o.ann_mode) cfg.ann.train.mode = parse_train_mode(*o.ann_mode);
  if (o.hidden) cfg.ann.hidden = *o.hidden;
  if (o.epochs) cfg.ann.train.max_epochs = *o.epochs;
  if (o.lr) cfg.ann.train.learning_rate = *o.lr;
  if (o.batch) cfg.ann.train.batch_size = *o.batch;
  if (o.patience) cfg.ann.train.patience = *o.patience;
  if (o.kernel) cfg.svm.kernel = parse_kernel(*o.kernel);
  if (o.gamma) cfg.svm.gamma = *o.gamma;
  if (o.C) cfg.svm.smo.C = *o.C;
  if (o.tol) cfg.svm.smo.tolerance = *o.tol;
  if (o.max_passes) cfg.svm.smo.max_passes = *o.max_passes;
  return cfg;
}

std::string in_out_dir(const PipelineConfig& cfg, const std::string& name) {
  return (fs::path(cfg.out_dir) / name).string();
}

std::string input_or_config(const Overrides& o, const PipelineConfig& cfg) {
  if (o.input) return *o.input;
  if (!cfg.flows_csv.empty()) return cfg.flows_csv;
  throw UsageError("no input CSV: pass --input or set input.flows in the config");
}

int run(int argc, char** argv) {
  CLI::App app{"Tor/NonTor flow classification toolkit"};
  app.set_version_flag("--version", std::string(kVersion));
  app.require_subcommand(1);

  Common common;
  Overrides o;

  auto* meter = app.add_subcommand("meter", "packet CSVs -> 29-column flow CSV");
  add_common(meter, common);
  add_meter_flags(meter, o);
  meter->add_option("-o,--output", o.output, "flow CSV (default <out-dir>/flows.csv)");

  auto* select = app.add_subcommand("select", "CFS feature selection -> reduced CSV + report");
  add_common(select, common);
  add_select_flags(select, o);
  select->add_option("-i,--input", o.input, "labeled flow CSV");
  select->add_option("-o,--output", o.output, "reduced CSV (default <out-dir>/selected.csv)");
  select->add_option("--report", o.report, "report file (default: selection_report.txt beside the output)");

  auto* train = app.add_subcommand("train", "train ANN and/or SVM -> model files");
  add_common(train, common);
  add_train_flags(train, o);
  train->add_option("-i,--input", o.input, "labeled flow CSV");
  train->add_option("--name-prefix", o.prefix, "model name prefix, e.g. CFS-");

  auto* eval = app.add_subcommand("eval", "evaluate model files -> report");
  add_common(eval, common);
  eval->add_option("-m,--model", o.models, "model file (repeatable)")->required()->check(CLI::ExistingFile);
  eval->add_option("-i,--input", o.input, "labeled flow CSV");
  eval->add_option("--out-prefix", o.output, "writes <prefix>.txt and <prefix>.csv (default <out-dir>/report)");
  eval->add_flag("--reference", o.reference, "append the reported C4.5 column");

  auto* synth = app.add_subcommand("synth", "synthetic flow CSV from a spec file");
  add_common(synth, common);
  synth->add_option("--spec", o.spec, "synth spec file (default: built-in two-cluster spec)");
  synth->add_option("-o,--output", o.output, "output CSV (default <out-dir>/flows.csv)");

  auto* pipe = app.add_subcommand("pipeline", "synth|meter -> select -> train -> eval");
  add_common(pipe, common);
  add_meter_flags(pipe, o);
  add_select_flags(pipe, o);
  add_train_flags(pipe, o);
  pipe->add_option("-i,--input", o.input, "labeled flow CSV");
  pipe->add_option("--spec", o.spec, "synth spec file, or 'default'");
  pipe->add_flag("--no-baseline", o.no_baseline, "skip the full-feature models");
  pipe->add_flag("--no-reference", o.no_reference, "omit the C4.5 column");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  auto cfg = resolve(common, o);

  if (meter->parsed()) {
    if (cfg.packet_files.empty()) throw UsageError("meter needs --tor, --nontor or --unlabeled packet files");
    const auto out = o.output.value_or(in_out_dir(cfg, "flows.csv"));
    const auto n = run_meter({cfg.packet_files, out, cfg.meter});
    std::cout << "meter: " << n << " flows -> " << out << '\n';
  } else if (select->parsed()) {
    const auto output = o.output.value_or(in_out_dir(cfg, "selected.csv"));
    // The report lands beside the reduced CSV unless placed explicitly.
    const auto report = o.report.value_or((fs::path(output).parent_path() / "selection_report.txt").string());
    SelectOptions s{input_or_config(o, cfg), output, report, cfg.select, cfg.split, cfg.search};
    run_select(s, std::cout);
  } else if (train->parsed()) {
    TrainOptions t{input_or_config(o, cfg), cfg.out_dir, cfg.classifier, o.prefix.value_or(""), cfg.split,
                   cfg.ann, cfg.svm};
    const auto out = run_train(t, std::cout);
    if (!out.svm_converged) std::cerr << "warning: SMO did not fully converge\n";
  } else if (eval->parsed()) {
    run_eval({o.models, input_or_config(o, cfg), o.output.value_or(in_out_dir(cfg, "report")), o.reference},
             std::cout);
  } else if (synth->parsed()) {
    const auto out = o.output.value_or(in_out_dir(cfg, "flows.csv"));
    std::string spec = o.spec.value_or(cfg.synth_spec);
    if (spec == "default") spec.clear();
    const auto data = run_synth({spec, out, cfg.seed});
    std::cout << "synth: " << data.dataset.size() << " rows -> " << out << '\n';
  } else if (pipe->parsed()) {
    if (o.input) {
      cfg.flows_csv = *o.input;
      cfg.synth_spec.clear();
      cfg.packet_files.clear();
    } else if (o.spec) {
      cfg.synth_spec = *o.spec;
      cfg.flows_csv.clear();
      cfg.packet_files.clear();
    } else if (!o.tor.empty() || !o.nontor.empty() || !o.unlabeled.empty()) {
      cfg.flows_csv.clear();
      cfg.synth_spec.clear();
    }
    const auto result = run_pipeline(cfg, std::cout);
    std::cout << "report: " << result.report_txt << '\n';
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  try {
    return run(argc, argv);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "data error: " << e.what() << '\n';
    return kExitData;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
