#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "torclass/cfs.hpp"
#include "torclass/dataset.hpp"
#include "torclass/flow_meter.hpp"
#include "torclass/kv_config.hpp"
#include "torclass/metrics.hpp"
#include "torclass/mlp.hpp"
#include "torclass/model_io.hpp"
#include "torclass/svm.hpp"

namespace torclass::pipeline {

inline constexpr const char* kVersion = "0.1.0";

// Every stage reads its inputs from files and writes its outputs to files.

struct MeterOptions {
  std::vector<std::pair<std::string, ClassLabel>> inputs;  // packet files and their labels
  std::string output;
  flow::MeterConfig meter;
};

/// Returns the number of flows written. Throws DataError("no packets") when
/// the inputs hold no records.
std::size_t run_meter(const MeterOptions& opts);

struct SelectOptions {
  std::string input;
  std::string output_csv;
  std::string report_path;  // empty: no report file
  bool enabled = true;
  data::SplitSpec split;
  cfs::SearchConfig search;
};

struct SelectResult {
  std::vector<std::string> selected;  // merit-path order
  std::size_t original_width = 0;
  double merit = 0.0;

  /// 100 * (1 - selected / original), from the actual column counts.
  double reduction_percent() const;
};

/// Correlations come from the training split only. With selection disabled
/// the input is copied byte for byte.
SelectResult run_select(const SelectOptions& opts, std::ostream& log);

enum class ClassifierChoice { Ann, Svm, Both };

struct AnnOptions {
  mlp::TrainConfig train;
  std::size_t hidden = 0;  // 0: 20 for more than 10 inputs, else 6
};

struct SvmOptions {
  svm::SmoConfig smo;
  svm::KernelKind kernel = svm::KernelKind::Rbf;
  double gamma = 0.0;  // 0: 1 / feature count
};

struct TrainOptions {
  std::string input;
  std::string out_dir;
  ClassifierChoice classifier = ClassifierChoice::Ann;
  std::string name_prefix;  // "CFS-" for reduced inputs
  data::SplitSpec split;
  AnnOptions ann;
  SvmOptions svm;
};

struct TrainOutput {
  std::vector<std::string> model_paths;
  std::string test_csv;
  std::vector<mlp::TrainHistory> ann_histories;
  bool svm_converged = true;
};

/// Splits, scales on the training split, trains, and writes `<name>.model`,
/// `<name>_history.csv` (ANN), `test.csv` (held-out rows verbatim) and
/// `manifest.json` into out_dir.
TrainOutput run_train(const TrainOptions& opts, std::ostream& log);

std::size_t auto_hidden_units(std::size_t inputs);

struct EvalOptions {
  std::vector<std::string> models;
  std::string input;
  std::string out_prefix;  // writes <prefix>.txt and <prefix>.csv; empty: no files
  bool reference = false;  // append the reported C4.5 column
};

/// One report column per model, projecting CSV columns by the model's feature names.
std::vector<metrics::ReportColumn> run_eval(const EvalOptions& opts, std::ostream& log);

struct SynthOptions {
  std::string spec_path;  // empty: built-in two-cluster spec
  std::string output;
  std::uint64_t seed = 1;
};

/// Writes the synthetic flow CSV plus `<output>.roles` (column roles).
data::SyntheticData run_synth(const SynthOptions& opts);

struct PipelineConfig {
  std::uint64_t seed = 1;
  std::string out_dir = "torclass-run";
  // Exactly one input source.
  std::string flows_csv;
  std::vector<std::pair<std::string, ClassLabel>> packet_files;
  std::string synth_spec;  // "default" for the built-in spec
  flow::MeterConfig meter;
  data::SplitSpec split;
  bool select = true;
  cfs::SearchConfig search;
  ClassifierChoice classifier = ClassifierChoice::Both;
  bool baseline = true;   // also train on the full feature set
  bool reference = true;  // append the C4.5 column
  AnnOptions ann;
  SvmOptions svm;

  /// Reads every key; unknown sections are ignored.
  static PipelineConfig from_config(const KvConfig& cfg);
  /// Propagates `seed` to split, init, SMO and synthesis.
  void apply_seed(std::uint64_t s);
};

struct PipelineResult {
  std::vector<metrics::ReportColumn> columns;
  SelectResult selection;
  std::string report_txt;
  std::string report_csv;
};

/// synth|meter|flows -> select -> train -> eval, with out_dir/manifest.json.
PipelineResult run_pipeline(const PipelineConfig& cfg, std::ostream& log);

ClassifierChoice parse_classifier(const std::string& text);
mlp::TrainMode parse_train_mode(const std::string& text);
svm::KernelKind parse_kernel(const std::string& text);

/// Hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

}  // namespace torclass::pipeline
