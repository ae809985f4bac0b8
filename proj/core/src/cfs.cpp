#include "torclass/cfs.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <queue>
#include <set>

#include "torclass/error.hpp"

namespace torclass::cfs {

void SearchConfig::validate() const {
  if (max_stale_expansions < 1) throw UsageError("max_stale_expansions must be >= 1");
  if (max_subset_size < 1) throw UsageError("max_subset_size must be >= 1");
}

double correlation(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("correlation: column lengths differ");
  if (x.size() < 2) throw DataError("correlation: need at least two observations");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = x[i] - mx;
    const double dy = y[i] - my;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) return 0.0;
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

CorrelationStats build_stats(const data::Dataset& train) {
  for (int y : train.labels()) {
    if (y != 0 && y != 1) throw DataError("correlation-based selection needs 0/1 class labels");
  }
  CorrelationStats st;
  st.num_features = train.width();
  st.names = train.schema();
  std::vector<std::vector<double>> cols;
  for (std::size_t j = 0; j < train.width(); ++j) cols.push_back(train.column(j));
  std::vector<double> cls(train.labels().begin(), train.labels().end());

  st.feature_class.resize(st.num_features);
  st.feature_feature.assign(st.num_features * st.num_features, 0.0);
  for (std::size_t i = 0; i < st.num_features; ++i) {
    st.feature_class[i] = std::abs(correlation(cols[i], cls));
    st.feature_feature[i * st.num_features + i] = 1.0;
    for (std::size_t j = i + 1; j < st.num_features; ++j) {
      const double r = std::abs(correlation(cols[i], cols[j]));
      st.feature_feature[i * st.num_features + j] = r;
      st.feature_feature[j * st.num_features + i] = r;
    }
  }
  return st;
}

double merit(std::span<const std::size_t> subset, const CorrelationStats& stats) {
  if (subset.empty()) throw UsageError("merit of an empty feature subset is undefined");
  const std::size_t k = subset.size();
  double rcf = 0.0;
  for (auto i : subset) rcf += stats.feature_class.at(i);
  rcf /= static_cast<double>(k);
  double rff = 1.0;
  if (k > 1) {
    double sum = 0.0;
    for (std::size_t a = 0; a < k; ++a) {
      for (std::size_t b = a + 1; b < k; ++b) sum += stats.ff(subset[a], subset[b]);
    }
    rff = sum / static_cast<double>(k * (k - 1) / 2);
  }
  const double kd = static_cast<double>(k);
  return kd * rcf / std::sqrt(kd + kd * (kd - 1.0) * rff);
}

bool better(double merit_a, std::span<const std::size_t> a, double merit_b,
            std::span<const std::size_t> b) {
  if (merit_a != merit_b) return merit_a > merit_b;
  if (a.size() != b.size()) return a.size() < b.size();
  return std::lexicographical_compare(a.begin(), a.end(), b.begin(), b.end());
}

namespace {

struct Node {
  std::vector<std::size_t> indices;  // sorted
  std::vector<std::size_t> order;    // addition order
  double merit = 0.0;
};

struct WorseFirst {
  bool operator()(const Node& a, const Node& b) const {
    return better(b.merit, b.indices, a.merit, a.indices);
  }
};

FeatureSubset to_subset(const Node& node, const CorrelationStats& stats) {
  FeatureSubset out;
  out.indices = node.indices;
  out.merit = node.merit;
  out.addition_order = node.order;
  std::vector<std::size_t> prefix;
  for (auto f : node.order) {
    prefix.push_back(f);
    std::sort(prefix.begin(), prefix.end());
    out.merit_path.push_back(merit(prefix, stats));
  }
  return out;
}

}  // namespace

FeatureSubset best_first_search(const CorrelationStats& stats, const SearchConfig& cfg) {
  cfg.validate();
  const std::size_t n = stats.num_features;
  if (n == 0) throw DataError("no features to select from");

  std::priority_queue<Node, std::vector<Node>, WorseFirst> frontier;
  std::set<std::vector<std::size_t>> seen;
  frontier.push(Node{});
  seen.insert({});

  Node best;
  bool have_best = false;
  std::size_t stale = 0;
  while (!frontier.empty() && stale < cfg.max_stale_expansions) {
    Node node = frontier.top();
    frontier.pop();
    bool improved = false;
    if (node.indices.size() < std::min(n, cfg.max_subset_size)) {
      for (std::size_t f = 0; f < n; ++f) {
        if (std::binary_search(node.indices.begin(), node.indices.end(), f)) continue;
        Node child;
        child.indices = node.indices;
        child.indices.insert(std::upper_bound(child.indices.begin(), child.indices.end(), f), f);
        if (!seen.insert(child.indices).second) continue;
        child.order = node.order;
        child.order.push_back(f);
        child.merit = merit(child.indices, stats);
        if (!have_best || better(child.merit, child.indices, best.merit, best.indices)) {
          best = child;
          have_best = true;
          improved = true;
        }
        frontier.push(std::move(child));
      }
    }
    stale = improved ? 0 : stale + 1;
  }
  return to_subset(best, stats);
}

FeatureSubset exhaustive_search(const CorrelationStats& stats) {
  const std::size_t n = stats.num_features;
  if (n == 0) throw DataError("no features to select from");
  if (n > 20) throw UsageError("exhaustive search supports at most 20 features, got " + std::to_string(n));
  Node best;
  bool have_best = false;
  std::vector<std::size_t> subset;
  for (std::uint32_t mask = 1; mask < (1u << n); ++mask) {
    subset.clear();
    for (std::size_t f = 0; f < n; ++f) {
      if (mask & (1u << f)) subset.push_back(f);
    }
    const double m = merit(subset, stats);
    if (!have_best || better(m, subset, best.merit, best.indices)) {
      best.indices = subset;
      best.merit = m;
      have_best = true;
    }
  }
  // Addition order for an exhaustive optimum: greedily by merit gain.
  std::vector<std::size_t> remaining = best.indices;
  std::vector<std::size_t> chosen;
  while (!remaining.empty()) {
    std::size_t pick = 0;
    double pick_merit = -1.0;
    for (std::size_t r = 0; r < remaining.size(); ++r) {
      auto trial = chosen;
      trial.insert(std::upper_bound(trial.begin(), trial.end(), remaining[r]), remaining[r]);
      const double m = merit(trial, stats);
      if (m > pick_merit) {
        pick_merit = m;
        pick = r;
      }
    }
    best.order.push_back(remaining[pick]);
    chosen.insert(std::upper_bound(chosen.begin(), chosen.end(), remaining[pick]), remaining[pick]);
    remaining.erase(remaining.begin() + static_cast<std::ptrdiff_t>(pick));
  }
  return to_subset(best, stats);
}

void write_selection_report(std::ostream& out, const FeatureSubset& subset,
                            const CorrelationStats& stats) {
  char buf[64];
  auto name = [&](std::size_t i) {
    return i < stats.names.size() ? stats.names[i] : "f" + std::to_string(i);
  };
  out << "# selected features (merit-path order)\n";
  out << "step,feature,merit\n";
  for (std::size_t s = 0; s < subset.addition_order.size(); ++s) {
    std::snprintf(buf, sizeof buf, "%.6f", subset.merit_path[s]);
    out << (s + 1) << ',' << name(subset.addition_order[s]) << ',' << buf << '\n';
  }
  std::snprintf(buf, sizeof buf, "%.6f", subset.merit);
  out << "# final merit " << buf << " with " << subset.indices.size() << " of "
      << stats.num_features << " features\n";

  out << "# feature-class correlation\n";
  out << "feature,abs_r_class\n";
  for (std::size_t i = 0; i < stats.num_features; ++i) {
    std::snprintf(buf, sizeof buf, "%.6f", stats.feature_class[i]);
    out << name(i) << ',' << buf << '\n';
  }
  out << "# feature-feature correlation matrix\n";
  out << "feature";
  for (std::size_t j = 0; j < stats.num_features; ++j) out << ',' << name(j);
  out << '\n';
  for (std::size_t i = 0; i < stats.num_features; ++i) {
    out << name(i);
    for (std::size_t j = 0; j < stats.num_features; ++j) {
      std::snprintf(buf, sizeof buf, "%.6f", stats.ff(i, j));
      out << ',' << buf;
    }
    out << '\n';
  }
}

}  // namespace torclass::cfs
