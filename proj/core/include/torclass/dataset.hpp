#pragma once

#include <cstddef>
#include <cstdint>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "torclass/kv_config.hpp"
#include "torclass/labels.hpp"

namespace torclass::data {

/// Labeled examples {(x_i, y_i)}, row-major. Class ids index `class_names`.
class Dataset {
 public:
  Dataset() = default;
  Dataset(std::vector<std::string> schema, std::vector<std::string> class_names);

  std::size_t size() const { return labels_.size(); }
  std::size_t width() const { return schema_.size(); }
  bool empty() const { return labels_.empty(); }

  const std::vector<std::string>& schema() const { return schema_; }
  const std::vector<std::string>& class_names() const { return class_names_; }
  std::size_t num_classes() const { return class_names_.size(); }

  std::span<const double> row(std::size_t i) const {
    return {values_.data() + i * width(), width()};
  }
  int label(std::size_t i) const { return labels_[i]; }
  const std::vector<int>& labels() const { return labels_; }
  double at(std::size_t i, std::size_t j) const { return values_[i * width() + j]; }
  std::vector<double> column(std::size_t j) const;
  std::span<const double> values() const { return values_; }

  /// Throws DataError on width mismatch, non-finite values or bad label.
  void add(std::span<const double> x, int label);

  Dataset subset(std::span<const std::size_t> rows) const;
  Dataset select_columns(std::span<const std::size_t> columns) const;
  /// Column indices of `names` in this schema; throws DataError listing any missing.
  std::vector<std::size_t> column_indices(std::span<const std::string> names) const;
  std::vector<std::size_t> class_counts() const;

 private:
  std::vector<std::string> schema_;
  std::vector<std::string> class_names_;
  std::vector<double> values_;
  std::vector<int> labels_;
};

/// NonTor = 0, Tor = 1.
std::vector<std::string> default_class_names();

/// Maps a column header to the canonical flow CSV name. Accepts the canonical
/// names and the published UNB-CIC spellings ("Flow Bytes/s", " Source Port",
/// "Label", ...). Unknown names are returned trimmed and unchanged.
std::string canonical_column_name(const std::string& header);

/// Loads a labeled flow CSV. The last column must be the label; IP columns may
/// hold dotted quads. Unlabeled rows are rejected.
Dataset load_flow_csv(std::istream& in);
Dataset load_flow_csv_file(const std::string& path);

/// Writes `ds` as CSV with `%.17g` values and a trailing label column.
void write_dataset_csv(std::ostream& out, const Dataset& ds);

struct SplitSpec {
  double train = 0.70;
  double validation = 0.15;
  double test = 0.15;
  std::uint64_t seed = 1;

  void validate() const;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> validation;
  std::vector<std::size_t> test;
};

/// Per-class proportional partition (each index list sorted ascending).
SplitIndices stratified_split(const Dataset& ds, const SplitSpec& spec);

/// k stratified folds, each sorted ascending.
std::vector<std::vector<std::size_t>> kfold_indices(const Dataset& ds, std::size_t k,
                                                    std::uint64_t seed);

/// Per-feature z-score fitted on a training split.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> std;
  std::vector<bool> constant;  // passed through unscaled

  std::vector<double> apply(std::span<const double> x) const;
  std::vector<double> unapply(std::span<const double> z) const;
};

Scaler fit_scaler(const Dataset& train);
Dataset apply_scaler(const Scaler& scaler, const Dataset& ds);

enum class FeatureRole { Informative, Duplicate, Noise };

struct DuplicatePlan {
  std::size_t source = 0;  // index among the informative features
  double noise = 0.0;      // std-dev of additive Gaussian noise; 0 = exact copy
};

struct ClassSpec {
  std::size_t count = 0;
  std::vector<double> mean;
  std::vector<double> covariance;  // row-major d x d
};

/// Class-conditional Gaussian generator with redundant and noise columns.
/// Column layout: informative, then duplicates, then noise.
struct SynthSpec {
  std::vector<ClassSpec> classes;  // index = class id
  std::vector<DuplicatePlan> duplicates;
  std::size_t noise_features = 0;
  double noise_scale = 1.0;
  std::vector<std::string> feature_names;  // optional; defaults to f0, f1, ...

  std::size_t informative_features() const;
  std::size_t width() const { return informative_features() + duplicates.size() + noise_features; }

  /// Reads keys under `prefix` (default "synth.") from a key-value config:
  ///   classes, count.<c>, mean.<c>, covariance.<c> (identity | diag:v,... | equicorr:rho | rows a,b;c,d),
  ///   duplicates (src:noise ...), noise_features, noise_scale, names (flow | list).
  static SynthSpec from_config(const KvConfig& cfg, const std::string& prefix = "synth.");
};

struct SyntheticData {
  Dataset dataset;
  std::vector<FeatureRole> roles;
  std::vector<std::size_t> duplicate_of;  // source column per column; self when not a duplicate
};

/// Rows are emitted class by class. Throws DataError on a covariance that is
/// not positive definite or inconsistent dimensions.
SyntheticData generate_synthetic(const SynthSpec& spec, std::uint64_t seed);

/// Built-in two-cluster spec: 500 NonTor + 500 Tor rows over the 28 flow columns.
std::string default_synth_spec_text();

}  // namespace torclass::data
