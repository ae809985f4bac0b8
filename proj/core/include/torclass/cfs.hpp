#pragma once

#include <cstddef>
#include <limits>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "torclass/dataset.hpp"

namespace torclass::cfs {

/// Absolute Pearson correlations: each feature against the 0/1 class, and
/// every feature pair. The pair matrix is symmetric with a unit diagonal.
struct CorrelationStats {
  std::size_t num_features = 0;
  std::vector<double> feature_class;
  std::vector<double> feature_feature;  // row-major num_features x num_features
  std::vector<std::string> names;

  double ff(std::size_t i, std::size_t j) const { return feature_feature[i * num_features + j]; }
};

struct FeatureSubset {
  std::vector<std::size_t> indices;  // sorted ascending
  double merit = 0.0;
  std::vector<std::size_t> addition_order;  // order in which the search added features
  std::vector<double> merit_path;            // merit after each addition
};

struct SearchConfig {
  std::size_t max_stale_expansions = 5;
  std::size_t max_subset_size = std::numeric_limits<std::size_t>::max();

  void validate() const;
};

/// Pearson product-moment correlation. Zero when either column is constant.
double correlation(std::span<const double> x, std::span<const double> y);

/// Built from a training split; labels must be 0/1.
CorrelationStats build_stats(const data::Dataset& train);

/// M_s = k * mean_rcf / sqrt(k + k(k-1) * mean_rff) over the subset.
double merit(std::span<const std::size_t> subset, const CorrelationStats& stats);

/// Total order used for selection: higher merit, then fewer features, then
/// lexicographically smaller index list.
bool better(double merit_a, std::span<const std::size_t> a, double merit_b,
            std::span<const std::size_t> b);

/// Forward best-first search over subsets, stopping after
/// `max_stale_expansions` consecutive expansions without a new global best.
FeatureSubset best_first_search(const CorrelationStats& stats, const SearchConfig& cfg = {});

/// Brute force over every non-empty subset; at most 20 features.
FeatureSubset exhaustive_search(const CorrelationStats& stats);

/// Selected names in merit-path order with the trajectory, then the full
/// correlation matrix as CSV.
void write_selection_report(std::ostream& out, const FeatureSubset& subset,
                            const CorrelationStats& stats);

}  // namespace torclass::cfs
