#include "torclass/pipeline.hpp"

#include <openssl/evp.h>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>

#include "torclass/error.hpp"

namespace torclass::pipeline {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

struct CsvText {
  std::string header;
  std::vector<std::string> rows;  // non-blank data lines, in file order
};

CsvText read_csv_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  CsvText text;
  std::string line;
  bool have_header = false;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    if (!have_header) {
      text.header = line;
      have_header = true;
    } else {
      text.rows.push_back(line);
    }
  }
  return text;
}

std::vector<std::string> split_cells(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(cell);
      cell.clear();
    } else {
      cell.push_back(c);
    }
  }
  cells.push_back(cell);
  return cells;
}

std::ofstream open_output(const std::string& path) {
  const fs::path p(path);
  if (p.has_parent_path()) fs::create_directories(p.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write '" + path + "'");
  return out;
}

double elapsed_ms(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - since).count();
}

std::string classifier_name(ClassifierChoice c) {
  switch (c) {
    case ClassifierChoice::Ann: return "ann";
    case ClassifierChoice::Svm: return "svm";
    case ClassifierChoice::Both: return "both";
  }
  return "both";
}

json ann_json(const AnnOptions& a) {
  const auto& t = a.train;
  return {{"mode", t.mode == mlp::TrainMode::Lm ? "lm" : "bp"},
          {"hidden", a.hidden},
          {"max_epochs", t.max_epochs},
          {"learning_rate", t.learning_rate},
          {"batch_size", t.batch_size},
          {"mu_init", t.lm_mu_init},
          {"mu_up", t.lm_mu_up},
          {"mu_down", t.lm_mu_down},
          {"mu_max", t.lm_mu_max},
          {"min_gradient", t.lm_min_gradient},
          {"patience", t.patience},
          {"seed", t.seed}};
}

json svm_json(const SvmOptions& s) {
  return {{"kernel", s.kernel == svm::KernelKind::Linear ? "linear" : "rbf"},
          {"gamma", s.gamma},
          {"C", s.smo.C},
          {"tolerance", s.smo.tolerance},
          {"max_passes", s.smo.max_passes},
          {"max_iterations", s.smo.max_iterations},
          {"seed", s.smo.seed}};
}

json split_json(const data::SplitSpec& s) {
  return {{"train", s.train}, {"validation", s.validation}, {"test", s.test}, {"seed", s.seed}};
}

void write_json(const std::string& path, const json& j) {
  auto out = open_output(path);
  out << j.dump(2) << '\n';
}

}  // namespace

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path + "'");
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr);
  char buf[1 << 14];
  while (in) {
    in.read(buf, sizeof buf);
    if (in.gcount() > 0) EVP_DigestUpdate(ctx, buf, static_cast<std::size_t>(in.gcount()));
  }
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx, digest, &len);
  EVP_MD_CTX_free(ctx);
  std::string hex;
  char byte[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(byte, sizeof byte, "%02x", digest[i]);
    hex += byte;
  }
  return hex;
}

ClassifierChoice parse_classifier(const std::string& text) {
  const auto t = to_lower(trim(text));
  if (t == "ann" || t == "mlp") return ClassifierChoice::Ann;
  if (t == "svm") return ClassifierChoice::Svm;
  if (t == "both") return ClassifierChoice::Both;
  throw UsageError("classifier must be ann, svm or both, got '" + text + "'");
}

mlp::TrainMode parse_train_mode(const std::string& text) {
  const auto t = to_lower(trim(text));
  if (t == "lm" || t == "trainlm") return mlp::TrainMode::Lm;
  if (t == "bp" || t == "bp-sgd" || t == "sgd") return mlp::TrainMode::BpSgd;
  throw UsageError("ANN mode must be lm or bp-sgd, got '" + text + "'");
}

svm::KernelKind parse_kernel(const std::string& text) {
  const auto t = to_lower(trim(text));
  if (t == "rbf") return svm::KernelKind::Rbf;
  if (t == "linear") return svm::KernelKind::Linear;
  throw UsageError("kernel must be rbf or linear, got '" + text + "'");
}

std::size_t run_meter(const MeterOptions& opts) {
  opts.meter.validate();
  if (opts.inputs.empty()) throw UsageError("meter needs at least one packet file");
  std::vector<flow::FlowFeatures> rows;
  std::size_t packets_seen = 0;
  for (const auto& [path, label] : opts.inputs) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("cannot open packet file '" + path + "'");
    const auto packets = flow::read_packet_records(in);
    packets_seen += packets.size();
    auto flows = flow::meter(packets, opts.meter, label);
    rows.insert(rows.end(), flows.begin(), flows.end());
  }
  if (packets_seen == 0) throw DataError("no packets");
  auto out = open_output(opts.output);
  flow::write_flow_csv_header(out);
  for (const auto& r : rows) flow::write_flow_csv_row(out, r);
  return rows.size();
}

double SelectResult::reduction_percent() const {
  if (original_width == 0) return 0.0;
  return 100.0 * (1.0 - static_cast<double>(selected.size()) / static_cast<double>(original_width));
}

SelectResult run_select(const SelectOptions& opts, std::ostream& log) {
  const auto ds = data::load_flow_csv_file(opts.input);
  SelectResult result;
  result.original_width = ds.width();
  if (!opts.enabled) {
    result.selected = ds.schema();
    const fs::path out(opts.output_csv);
    if (out.has_parent_path()) fs::create_directories(out.parent_path());
    fs::copy_file(opts.input, opts.output_csv, fs::copy_options::overwrite_existing);
    log << "selection disabled: " << ds.width() << " features passed through\n";
    return result;
  }

  const auto split = data::stratified_split(ds, opts.split);
  const auto stats = cfs::build_stats(ds.subset(split.train));
  const auto best = cfs::best_first_search(stats, opts.search);
  result.merit = best.merit;
  for (auto i : best.addition_order) result.selected.push_back(ds.schema()[i]);

  // Project the text columns so values are carried over byte for byte.
  const auto text = read_csv_text(opts.input);
  auto header_cells = split_cells(text.header);
  std::vector<std::size_t> keep(best.indices.begin(), best.indices.end());
  keep.push_back(header_cells.size() - 1);
  auto out = open_output(opts.output_csv);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out << (k ? "," : "") << data::canonical_column_name(header_cells[keep[k]]);
  }
  out << '\n';
  for (const auto& line : text.rows) {
    const auto cells = split_cells(line);
    for (std::size_t k = 0; k < keep.size(); ++k) out << (k ? "," : "") << cells[keep[k]];
    out << '\n';
  }

  if (!opts.report_path.empty()) {
    auto report = open_output(opts.report_path);
    cfs::write_selection_report(report, best, stats);
  }

  char pct[32];
  std::snprintf(pct, sizeof pct, "%.1f", result.reduction_percent());
  log << "selected " << result.selected.size() << " of " << result.original_width << " features ("
      << pct << "% reduction):";
  for (std::size_t i = 0; i < result.selected.size(); ++i) log << (i ? ", " : " ") << result.selected[i];
  log << '\n';
  return result;
}

std::size_t auto_hidden_units(std::size_t inputs) { return inputs > 10 ? 20 : 6; }

TrainOutput run_train(const TrainOptions& opts, std::ostream& log) {
  const auto started = std::chrono::steady_clock::now();
  const auto ds = data::load_flow_csv_file(opts.input);
  const auto split = data::stratified_split(ds, opts.split);
  const auto train_raw = ds.subset(split.train);
  const auto scaler = data::fit_scaler(train_raw);
  const auto train_set = data::apply_scaler(scaler, train_raw);
  const auto val_set = data::apply_scaler(scaler, ds.subset(split.validation));
  fs::create_directories(opts.out_dir);

  TrainOutput out;
  json timings = json::object();
  json histories = json::object();
  const bool want_ann = opts.classifier != ClassifierChoice::Svm;
  const bool want_svm = opts.classifier != ClassifierChoice::Ann;

  if (want_ann) {
    const auto t0 = std::chrono::steady_clock::now();
    mlp::Layout layout{ds.width(), opts.ann.hidden ? opts.ann.hidden : auto_hidden_units(ds.width()), 2};
    auto result = mlp::train(mlp::init(layout, opts.ann.train.seed), mlp::make_batch(train_set),
                             mlp::make_batch(val_set), opts.ann.train);
    ModelBundle bundle{opts.name_prefix + "ANN", ClassifierKind::Ann, ds.schema(), scaler,
                       std::move(result.model), {}};
    const std::string stem = (fs::path(opts.out_dir) / (opts.name_prefix + "ann")).string();
    save_bundle(stem + ".model", bundle);
    auto hist = open_output(stem + "_history.csv");
    mlp::write_history_csv(hist, result.history);
    log << bundle.name << ": " << layout.inputs << "-" << layout.hidden << "-" << layout.outputs << " network, "
        << result.history.epochs() << " epochs, stop=" << result.history.stop_reason
        << ", best epoch " << result.history.best_epoch << '\n';
    histories[bundle.name] = {{"epochs", result.history.epochs()},
                              {"stop_reason", result.history.stop_reason},
                              {"best_epoch", result.history.best_epoch}};
    out.model_paths.push_back(stem + ".model");
    out.ann_histories.push_back(std::move(result.history));
    timings["ann_ms"] = elapsed_ms(t0);
  }
  if (want_svm) {
    const auto t0 = std::chrono::steady_clock::now();
    svm::Kernel kernel = opts.svm.kernel == svm::KernelKind::Linear
                             ? svm::Kernel::linear()
                             : (opts.svm.gamma > 0.0 ? svm::Kernel::rbf(opts.svm.gamma)
                                                     : svm::default_kernel(ds.width()));
    const auto trained = svm::train_ovr(train_set, opts.svm.smo, kernel);
    out.svm_converged = trained.converged();
    ModelBundle bundle{opts.name_prefix + "SVM", ClassifierKind::Svm, ds.schema(), scaler, std::nullopt,
                       trained.models()};
    const std::string path = (fs::path(opts.out_dir) / (opts.name_prefix + "svm.model")).string();
    save_bundle(path, bundle);
    log << bundle.name << ": " << (kernel.kind == svm::KernelKind::Linear ? "linear" : "rbf") << " kernel";
    if (kernel.kind == svm::KernelKind::Rbf) log << " gamma=" << kernel.gamma;
    log << ", support vectors";
    for (const auto& m : bundle.svm) log << ' ' << m.num_support_vectors();
    log << (out.svm_converged ? "" : " (warning: not fully converged)") << '\n';
    out.model_paths.push_back(path);
    timings["svm_ms"] = elapsed_ms(t0);
  }

  const auto text = read_csv_text(opts.input);
  out.test_csv = (fs::path(opts.out_dir) / "test.csv").string();
  {
    auto test = open_output(out.test_csv);
    test << text.header << '\n';
    for (auto i : split.test) test << text.rows.at(i) << '\n';
  }

  timings["total_ms"] = elapsed_ms(started);
  json manifest = {{"tool", "torclass"},
                   {"version", kVersion},
                   {"stage", "train"},
                   {"config",
                    {{"input", opts.input},
                     {"classifier", classifier_name(opts.classifier)},
                     {"name_prefix", opts.name_prefix},
                     {"split", split_json(opts.split)},
                     {"ann", ann_json(opts.ann)},
                     {"svm", svm_json(opts.svm)}}},
                   {"inputs", {{opts.input, sha256_file(opts.input)}}},
                   {"split_sizes",
                    {{"train", split.train.size()}, {"validation", split.validation.size()}, {"test", split.test.size()}}},
                   {"histories", histories},
                   {"artifacts", json::object()},
                   {"timings_ms", timings}};
  for (const auto& p : out.model_paths) manifest["artifacts"][p] = sha256_file(p);
  manifest["artifacts"][out.test_csv] = sha256_file(out.test_csv);
  write_json((fs::path(opts.out_dir) / "manifest.json").string(), manifest);
  return out;
}

std::vector<metrics::ReportColumn> run_eval(const EvalOptions& opts, std::ostream& log) {
  if (opts.models.empty()) throw UsageError("eval needs at least one model");
  const auto ds = data::load_flow_csv_file(opts.input);
  std::vector<metrics::ReportColumn> columns;
  for (const auto& path : opts.models) {
    const auto bundle = load_bundle(path);
    const auto cols = ds.column_indices(bundle.features);
    std::vector<int> predictions;
    std::vector<double> x(cols.size());
    for (std::size_t i = 0; i < ds.size(); ++i) {
      for (std::size_t k = 0; k < cols.size(); ++k) x[k] = ds.at(i, cols[k]);
      predictions.push_back(bundle.predict(x));
    }
    columns.push_back({bundle.name, metrics::build_report(predictions, ds.labels()), {}});
  }
  if (opts.reference) columns.push_back(metrics::c45_reference_column());
  metrics::write_report_text(log, columns);
  if (!opts.out_prefix.empty()) {
    auto txt = open_output(opts.out_prefix + ".txt");
    metrics::write_report_text(txt, columns);
    auto csv = open_output(opts.out_prefix + ".csv");
    metrics::write_report_csv(csv, columns);
  }
  return columns;
}

data::SyntheticData run_synth(const SynthOptions& opts) {
  KvConfig cfg;
  if (opts.spec_path.empty() || opts.spec_path == "default") {
    std::istringstream in(data::default_synth_spec_text());
    cfg = KvConfig::parse(in, "<built-in spec>");
  } else {
    cfg = KvConfig::load(opts.spec_path);
  }
  auto synth = data::generate_synthetic(data::SynthSpec::from_config(cfg), opts.seed);
  auto out = open_output(opts.output);
  data::write_dataset_csv(out, synth.dataset);
  auto roles = open_output(opts.output + ".roles");
  roles << "feature,role,source\n";
  for (std::size_t j = 0; j < synth.roles.size(); ++j) {
    const char* role = synth.roles[j] == data::FeatureRole::Informative ? "informative"
                       : synth.roles[j] == data::FeatureRole::Duplicate ? "duplicate"
                                                                        : "noise";
    roles << synth.dataset.schema()[j] << ',' << role << ',' << synth.dataset.schema()[synth.duplicate_of[j]]
          << '\n';
  }
  return synth;
}

void PipelineConfig::apply_seed(std::uint64_t s) {
  seed = s;
  split.seed = s;
  ann.train.seed = s;
  svm.smo.seed = s;
}

PipelineConfig PipelineConfig::from_config(const KvConfig& kv) {
  PipelineConfig c;
  c.out_dir = kv.get_string("out_dir", c.out_dir);
  c.flows_csv = kv.get_string("input.flows", "");
  c.synth_spec = kv.get_string("input.synth_spec", "");
  for (const auto& key : kv.keys_with_prefix("input.packets.")) {
    const auto label = parse_label(key.substr(std::string("input.packets.").size()));
    if (!label) throw UsageError(key + ": unknown label");
    for (const auto& path : split_list(*kv.get(key), ",")) c.packet_files.emplace_back(path, *label);
  }
  c.meter.activity_timeout_us = kv.get_int("meter.activity_timeout_us", c.meter.activity_timeout_us);
  c.meter.flow_timeout_us = kv.get_int("meter.flow_timeout_us", c.meter.flow_timeout_us);
  c.split.train = kv.get_double("split.train", c.split.train);
  c.split.validation = kv.get_double("split.validation", c.split.validation);
  c.split.test = kv.get_double("split.test", c.split.test);
  c.select = kv.get_bool("select.enabled", c.select);
  c.search.max_stale_expansions =
      static_cast<std::size_t>(kv.get_int("select.max_stale", static_cast<std::int64_t>(c.search.max_stale_expansions)));
  if (kv.contains("select.max_size")) {
    c.search.max_subset_size = static_cast<std::size_t>(kv.get_int("select.max_size", 0));
  }
  c.classifier = parse_classifier(kv.get_string("classifier.kind", classifier_name(c.classifier)));
  c.baseline = kv.get_bool("classifier.baseline", c.baseline);
  c.reference = kv.get_bool("classifier.reference", c.reference);

  auto& t = c.ann.train;
  t.mode = parse_train_mode(kv.get_string("ann.mode", "lm"));
  const auto hidden = kv.get_string("ann.hidden", "auto");
  c.ann.hidden = hidden == "auto" ? 0 : static_cast<std::size_t>(kv.get_int("ann.hidden", 0));
  t.max_epochs = static_cast<std::size_t>(kv.get_int("ann.max_epochs", static_cast<std::int64_t>(t.max_epochs)));
  t.learning_rate = kv.get_double("ann.learning_rate", t.learning_rate);
  t.batch_size = static_cast<std::size_t>(kv.get_int("ann.batch_size", static_cast<std::int64_t>(t.batch_size)));
  t.lm_mu_init = kv.get_double("ann.mu_init", t.lm_mu_init);
  t.lm_mu_up = kv.get_double("ann.mu_up", t.lm_mu_up);
  t.lm_mu_down = kv.get_double("ann.mu_down", t.lm_mu_down);
  t.lm_mu_max = kv.get_double("ann.mu_max", t.lm_mu_max);
  t.lm_min_gradient = kv.get_double("ann.min_gradient", t.lm_min_gradient);
  t.patience = static_cast<std::size_t>(kv.get_int("ann.patience", static_cast<std::int64_t>(t.patience)));

  c.svm.kernel = parse_kernel(kv.get_string("svm.kernel", "rbf"));
  const auto gamma = kv.get_string("svm.gamma", "auto");
  c.svm.gamma = gamma == "auto" ? 0.0 : kv.get_double("svm.gamma", 0.0);
  c.svm.smo.C = kv.get_double("svm.C", c.svm.smo.C);
  c.svm.smo.tolerance = kv.get_double("svm.tolerance", c.svm.smo.tolerance);
  c.svm.smo.max_passes =
      static_cast<std::size_t>(kv.get_int("svm.max_passes", static_cast<std::int64_t>(c.svm.smo.max_passes)));
  c.svm.smo.max_iterations =
      static_cast<std::size_t>(kv.get_int("svm.max_iterations", static_cast<std::int64_t>(c.svm.smo.max_iterations)));

  c.apply_seed(static_cast<std::uint64_t>(kv.get_int("seed", 1)));
  return c;
}

PipelineResult run_pipeline(const PipelineConfig& cfg, std::ostream& log) {
  const auto started = std::chrono::steady_clock::now();
  const int sources = (!cfg.flows_csv.empty()) + (!cfg.packet_files.empty()) + (!cfg.synth_spec.empty());
  if (sources != 1) throw UsageError("pipeline needs exactly one input: flows CSV, packet files or synth spec");
  const fs::path out_dir(cfg.out_dir);
  fs::create_directories(out_dir);
  json timings = json::object();
  json inputs = json::object();

  std::string flows = cfg.flows_csv;
  auto t0 = std::chrono::steady_clock::now();
  if (!cfg.synth_spec.empty()) {
    flows = (out_dir / "flows.csv").string();
    run_synth({cfg.synth_spec == "default" ? "" : cfg.synth_spec, flows, cfg.seed});
    if (cfg.synth_spec != "default") inputs[cfg.synth_spec] = sha256_file(cfg.synth_spec);
    log << "synth: wrote " << flows << '\n';
    timings["synth_ms"] = elapsed_ms(t0);
  } else if (!cfg.packet_files.empty()) {
    flows = (out_dir / "flows.csv").string();
    for (const auto& [path, label] : cfg.packet_files) inputs[path] = sha256_file(path);
    const auto n = run_meter({cfg.packet_files, flows, cfg.meter});
    log << "meter: " << n << " flows -> " << flows << '\n';
    timings["meter_ms"] = elapsed_ms(t0);
  } else {
    inputs[flows] = sha256_file(flows);
  }

  PipelineResult result;
  std::vector<std::string> models;
  std::string test_csv;
  auto train_stage = [&](const std::string& input, const std::string& dir, const std::string& prefix) {
    TrainOptions topts{input, (out_dir / dir).string(), cfg.classifier, prefix, cfg.split, cfg.ann, cfg.svm};
    auto trained = run_train(topts, log);
    if (test_csv.empty()) test_csv = trained.test_csv;
    return trained.model_paths;
  };

  std::vector<std::string> full_models, cfs_models;
  if (cfg.baseline || !cfg.select) {
    t0 = std::chrono::steady_clock::now();
    full_models = train_stage(flows, "full", "");
    timings["train_full_ms"] = elapsed_ms(t0);
  }
  if (cfg.select) {
    t0 = std::chrono::steady_clock::now();
    SelectOptions sopts{flows, (out_dir / "cfs" / "selected.csv").string(),
                        (out_dir / "cfs" / "selection_report.txt").string(), true, cfg.split, cfg.search};
    result.selection = run_select(sopts, log);
    timings["select_ms"] = elapsed_ms(t0);
    t0 = std::chrono::steady_clock::now();
    cfs_models = train_stage(sopts.output_csv, "cfs", "CFS-");
    timings["train_cfs_ms"] = elapsed_ms(t0);
  }
  // Table column order: ANN, CFS-ANN, SVM, CFS-SVM.
  for (std::size_t k = 0; k < 2; ++k) {
    if (k < full_models.size()) models.push_back(full_models[k]);
    if (k < cfs_models.size()) models.push_back(cfs_models[k]);
  }

  t0 = std::chrono::steady_clock::now();
  const auto report_prefix = (out_dir / "report").string();
  result.columns = run_eval({models, test_csv, report_prefix, cfg.reference}, log);
  result.report_txt = report_prefix + ".txt";
  result.report_csv = report_prefix + ".csv";
  timings["eval_ms"] = elapsed_ms(t0);
  timings["total_ms"] = elapsed_ms(started);

  json artifacts = json::object();
  for (const auto& p : models) artifacts[p] = sha256_file(p);
  artifacts[result.report_csv] = sha256_file(result.report_csv);
  if (flows != cfg.flows_csv) artifacts[flows] = sha256_file(flows);
  json manifest = {{"tool", "torclass"},
                   {"version", kVersion},
                   {"stage", "pipeline"},
                   {"config",
                    {{"seed", cfg.seed},
                     {"flows_csv", cfg.flows_csv},
                     {"synth_spec", cfg.synth_spec},
                     {"meter", {{"activity_timeout_us", cfg.meter.activity_timeout_us},
                                {"flow_timeout_us", cfg.meter.flow_timeout_us}}},
                     {"split", split_json(cfg.split)},
                     {"select", {{"enabled", cfg.select}, {"max_stale", cfg.search.max_stale_expansions}}},
                     {"classifier", classifier_name(cfg.classifier)},
                     {"baseline", cfg.baseline},
                     {"ann", ann_json(cfg.ann)},
                     {"svm", svm_json(cfg.svm)}}},
                   {"inputs", inputs},
                   {"selected_features", result.selection.selected},
                   {"artifacts", artifacts},
                   {"timings_ms", timings}};
  write_json((out_dir / "manifest.json").string(), manifest);
  return result;
}

}  // namespace torclass::pipeline
