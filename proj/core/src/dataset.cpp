#include "torclass/dataset.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "torclass/error.hpp"
#include "torclass/flow_meter.hpp"
#include "torclass/random.hpp"

namespace torclass::data {

Dataset::Dataset(std::vector<std::string> schema, std::vector<std::string> class_names)
    : schema_(std::move(schema)), class_names_(std::move(class_names)) {}

std::vector<double> Dataset::column(std::size_t j) const {
  std::vector<double> out(size());
  for (std::size_t i = 0; i < size(); ++i) out[i] = at(i, j);
  return out;
}

void Dataset::add(std::span<const double> x, int label) {
  if (x.size() != width()) {
    throw DataError("example width " + std::to_string(x.size()) + " does not match schema width " +
                    std::to_string(width()));
  }
  if (label < 0 || static_cast<std::size_t>(label) >= num_classes()) {
    throw DataError("label index " + std::to_string(label) + " out of range");
  }
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!std::isfinite(x[j])) throw DataError("non-finite value in column " + schema_[j]);
  }
  values_.insert(values_.end(), x.begin(), x.end());
  labels_.push_back(label);
}

Dataset Dataset::subset(std::span<const std::size_t> rows) const {
  Dataset out(schema_, class_names_);
  out.values_.reserve(rows.size() * width());
  out.labels_.reserve(rows.size());
  for (auto r : rows) {
    auto x = row(r);
    out.values_.insert(out.values_.end(), x.begin(), x.end());
    out.labels_.push_back(labels_[r]);
  }
  return out;
}

Dataset Dataset::select_columns(std::span<const std::size_t> columns) const {
  std::vector<std::string> schema;
  for (auto c : columns) schema.push_back(schema_.at(c));
  Dataset out(std::move(schema), class_names_);
  out.values_.reserve(size() * columns.size());
  for (std::size_t i = 0; i < size(); ++i) {
    for (auto c : columns) out.values_.push_back(at(i, c));
  }
  out.labels_ = labels_;
  return out;
}

std::vector<std::size_t> Dataset::column_indices(std::span<const std::string> names) const {
  std::vector<std::size_t> idx;
  std::vector<std::string> missing;
  for (const auto& name : names) {
    auto it = std::find(schema_.begin(), schema_.end(), name);
    if (it == schema_.end()) {
      missing.push_back(name);
    } else {
      idx.push_back(static_cast<std::size_t>(it - schema_.begin()));
    }
  }
  if (!missing.empty()) {
    std::string msg = "missing features:";
    for (const auto& m : missing) msg += " " + m;
    std::vector<std::string> extra;
    for (const auto& s : schema_) {
      if (std::find(names.begin(), names.end(), s) == names.end()) extra.push_back(s);
    }
    if (!extra.empty()) {
      msg += "; extra features:";
      for (const auto& e : extra) msg += " " + e;
    }
    throw DataError(msg);
  }
  return idx;
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(num_classes(), 0);
  for (int y : labels_) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

std::vector<std::string> default_class_names() {
  return {std::string(label_name(ClassLabel::NonTor)), std::string(label_name(ClassLabel::Tor))};
}

namespace {

std::string normalize_header(const std::string& header) {
  std::string s;
  for (char c : to_lower(trim(header))) {
    if (c == ' ' || c == '_' || c == '.' || c == '\t') continue;
    s.push_back(c);
  }
  auto replace_all = [&](const std::string& from, const std::string& to) {
    for (std::size_t pos = s.find(from); pos != std::string::npos; pos = s.find(from, pos + to.size())) {
      s.replace(pos, from.size(), to);
    }
  };
  replace_all("source", "src");
  replace_all("destination", "dst");
  replace_all("/s", "pers");
  return s;
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  for (char c : line) {
    if (c == ',') {
      cells.push_back(trim(cell));
      cell.clear();
    } else if (c != '\r') {
      cell.push_back(c);
    }
  }
  cells.push_back(trim(cell));
  return cells;
}

bool parse_number(const std::string& text, double& out) {
  if (text.empty()) return false;
  const char* begin = text.data();
  if (*begin == '+') ++begin;
  auto [ptr, ec] = std::from_chars(begin, text.data() + text.size(), out);
  return ec == std::errc() && ptr == text.data() + text.size();
}

}  // namespace

std::string canonical_column_name(const std::string& header) {
  const std::string norm = normalize_header(header);
  if (norm == "label" || norm == "class") return std::string(flow::kLabelColumn);
  for (const auto& name : flow::kFeatureNames) {
    if (normalize_header(std::string(name)) == norm) return std::string(name);
  }
  return trim(header);
}

Dataset load_flow_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  std::vector<std::string> header;
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) {
      header = split_csv_line(line);
      break;
    }
  }
  if (header.empty()) throw DataError("flow CSV is empty");
  for (auto& h : header) h = canonical_column_name(h);
  if (header.size() < 2 || header.back() != flow::kLabelColumn) {
    throw DataError("flow CSV must end with a 'label' column (missing label column)");
  }
  std::vector<std::string> schema(header.begin(), header.end() - 1);
  std::vector<bool> ip_column(schema.size(), false);
  for (std::size_t j = 0; j < schema.size(); ++j) {
    ip_column[j] = schema[j] == flow::kFeatureNames[flow::kSrcIp] ||
                   schema[j] == flow::kFeatureNames[flow::kDstIp];
  }

  Dataset ds(schema, default_class_names());
  std::vector<double> x(schema.size());
  while (std::getline(in, line)) {
    ++line_no;
    if (trim(line).empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size()) {
      throw DataError("expected " + std::to_string(header.size()) + " columns at row " +
                      std::to_string(line_no) + ", got " + std::to_string(cells.size()));
    }
    for (std::size_t j = 0; j < schema.size(); ++j) {
      if (parse_number(cells[j], x[j]) && std::isfinite(x[j])) continue;
      if (ip_column[j] && cells[j].find('.') != std::string::npos) {
        try {
          x[j] = static_cast<double>(flow::parse_ipv4(cells[j]));
          continue;
        } catch (const DataError&) {
        }
      }
      throw DataError("non-numeric cell '" + cells[j] + "' at row " + std::to_string(line_no) +
                      ", column " + schema[j]);
    }
    const auto label = parse_label(cells.back());
    if (!label) {
      throw DataError("unknown label '" + cells.back() + "' at row " + std::to_string(line_no));
    }
    if (*label == ClassLabel::Unlabeled) {
      throw DataError("unlabeled data at row " + std::to_string(line_no) +
                      "; a labeled flow CSV is required");
    }
    ds.add(x, class_id(*label));
  }
  if (ds.empty()) throw DataError("flow CSV has no data rows");
  return ds;
}

Dataset load_flow_csv_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open flow CSV '" + path + "'");
  return load_flow_csv(in);
}

void write_dataset_csv(std::ostream& out, const Dataset& ds) {
  for (const auto& name : ds.schema()) out << name << ',';
  out << flow::kLabelColumn << '\n';
  char buf[64];
  for (std::size_t i = 0; i < ds.size(); ++i) {
    for (double v : ds.row(i)) {
      std::snprintf(buf, sizeof buf, "%.17g", v);
      out << buf << ',';
    }
    out << ds.class_names()[static_cast<std::size_t>(ds.label(i))] << '\n';
  }
}

void SplitSpec::validate() const {
  if (!(train > 0.0) || !(validation > 0.0) || !(test > 0.0)) {
    throw UsageError("split ratios must all be positive");
  }
  if (std::abs(train + validation + test - 1.0) > 1e-9) {
    throw UsageError("split ratios must sum to 1");
  }
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& ds) {
  std::vector<std::vector<std::size_t>> by_class(ds.num_classes());
  for (std::size_t i = 0; i < ds.size(); ++i) {
    by_class[static_cast<std::size_t>(ds.label(i))].push_back(i);
  }
  return by_class;
}

}  // namespace

SplitIndices stratified_split(const Dataset& ds, const SplitSpec& spec) {
  spec.validate();
  auto by_class = indices_by_class(ds);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < 3) {
      throw DataError("class " + ds.class_names()[c] + " has " + std::to_string(by_class[c].size()) +
                      " examples; stratified split needs at least 3");
    }
  }

  const std::array<double, 3> ratios = {spec.train, spec.validation, spec.test};
  // Accumulated (allocated - exact quota) per split; used to break remainder
  // ties so the global split sizes stay proportional too.
  std::array<double, 3> surplus = {0.0, 0.0, 0.0};
  Rng rng(spec.seed);
  std::array<std::vector<std::size_t>, 3> parts;

  for (auto& members : by_class) {
    const std::size_t n = members.size();
    std::array<std::size_t, 3> alloc{};
    std::array<double, 3> quota{};
    std::size_t assigned = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      quota[s] = static_cast<double>(n) * ratios[s];
      alloc[s] = static_cast<std::size_t>(std::floor(quota[s] + 1e-9));
      assigned += alloc[s];
    }
    std::array<std::size_t, 3> order = {0, 1, 2};
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      const double ra = quota[a] - static_cast<double>(alloc[a]);
      const double rb = quota[b] - static_cast<double>(alloc[b]);
      if (std::abs(ra - rb) > 1e-9) return ra > rb;
      if (std::abs(surplus[a] - surplus[b]) > 1e-9) return surplus[a] < surplus[b];
      return a < b;
    });
    for (std::size_t k = 0; assigned < n; ++k, ++assigned) ++alloc[order[k % 3]];
    // Every split receives at least one example of every class.
    for (std::size_t s = 0; s < 3; ++s) {
      if (alloc[s] == 0) {
        auto largest = static_cast<std::size_t>(std::max_element(alloc.begin(), alloc.end()) - alloc.begin());
        --alloc[largest];
        ++alloc[s];
      }
    }
    for (std::size_t s = 0; s < 3; ++s) surplus[s] += static_cast<double>(alloc[s]) - quota[s];

    rng.shuffle(std::span<std::size_t>(members));
    std::size_t pos = 0;
    for (std::size_t s = 0; s < 3; ++s) {
      for (std::size_t k = 0; k < alloc[s]; ++k) parts[s].push_back(members[pos++]);
    }
  }
  for (auto& p : parts) std::sort(p.begin(), p.end());
  return {std::move(parts[0]), std::move(parts[1]), std::move(parts[2])};
}

std::vector<std::vector<std::size_t>> kfold_indices(const Dataset& ds, std::size_t k,
                                                    std::uint64_t seed) {
  if (k < 2) throw UsageError("k-fold needs k >= 2");
  auto by_class = indices_by_class(ds);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (!by_class[c].empty() && by_class[c].size() < k) {
      throw DataError("class " + ds.class_names()[c] + " has fewer than k=" + std::to_string(k) +
                      " examples");
    }
  }
  Rng rng(seed);
  std::vector<std::vector<std::size_t>> folds(k);
  std::size_t next = 0;
  for (auto& members : by_class) {
    rng.shuffle(std::span<std::size_t>(members));
    for (auto idx : members) folds[next++ % k].push_back(idx);
  }
  for (auto& f : folds) std::sort(f.begin(), f.end());
  return folds;
}

std::vector<double> Scaler::apply(std::span<const double> x) const {
  std::vector<double> z(x.begin(), x.end());
  for (std::size_t j = 0; j < z.size(); ++j) {
    if (!constant[j]) z[j] = (x[j] - mean[j]) / std[j];
  }
  return z;
}

std::vector<double> Scaler::unapply(std::span<const double> z) const {
  std::vector<double> x(z.begin(), z.end());
  for (std::size_t j = 0; j < x.size(); ++j) {
    if (!constant[j]) x[j] = z[j] * std[j] + mean[j];
  }
  return x;
}

Scaler fit_scaler(const Dataset& train) {
  if (train.empty()) throw DataError("cannot fit a scaler on an empty dataset");
  const std::size_t w = train.width();
  const double n = static_cast<double>(train.size());
  Scaler sc;
  sc.mean.assign(w, 0.0);
  sc.std.assign(w, 0.0);
  sc.constant.assign(w, false);
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t j = 0; j < w; ++j) sc.mean[j] += train.at(i, j);
  }
  for (auto& m : sc.mean) m /= n;
  for (std::size_t i = 0; i < train.size(); ++i) {
    for (std::size_t j = 0; j < w; ++j) {
      const double d = train.at(i, j) - sc.mean[j];
      sc.std[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < w; ++j) {
    sc.std[j] = std::sqrt(sc.std[j] / n);
    sc.constant[j] = !(sc.std[j] > 1e-12 * std::max(1.0, std::abs(sc.mean[j])));
  }
  return sc;
}

Dataset apply_scaler(const Scaler& scaler, const Dataset& ds) {
  if (scaler.mean.size() != ds.width()) throw DataError("scaler width does not match dataset");
  Dataset out(ds.schema(), ds.class_names());
  for (std::size_t i = 0; i < ds.size(); ++i) out.add(scaler.apply(ds.row(i)), ds.label(i));
  return out;
}

std::size_t SynthSpec::informative_features() const {
  return classes.empty() ? 0 : classes.front().mean.size();
}

namespace {

std::vector<double> parse_doubles(const std::string& text, const std::string& key) {
  std::vector<double> out;
  for (const auto& item : split_list(text, ", \t")) out.push_back(parse_double(item, key));
  return out;
}

std::vector<double> parse_covariance(const std::string& text, std::size_t d, const std::string& key) {
  std::vector<double> cov(d * d, 0.0);
  const std::string t = to_lower(trim(text));
  if (t.empty() || t == "identity") {
    for (std::size_t i = 0; i < d; ++i) cov[i * d + i] = 1.0;
    return cov;
  }
  if (t.rfind("diag:", 0) == 0) {
    const auto diag = parse_doubles(t.substr(5), key);
    if (diag.size() != d) throw UsageError(key + ": diagonal needs " + std::to_string(d) + " entries");
    for (std::size_t i = 0; i < d; ++i) cov[i * d + i] = diag[i];
    return cov;
  }
  if (t.rfind("equicorr:", 0) == 0) {
    // Unit variances with one shared off-diagonal entry.
    const double rho = parse_double(t.substr(9), key);
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) cov[i * d + j] = i == j ? 1.0 : rho;
    }
    return cov;
  }
  const auto rows = split_list(t, ";");
  if (rows.size() != d) throw UsageError(key + ": covariance needs " + std::to_string(d) + " rows");
  for (std::size_t i = 0; i < d; ++i) {
    const auto r = parse_doubles(rows[i], key);
    if (r.size() != d) throw UsageError(key + ": covariance row " + std::to_string(i) + " has wrong width");
    std::copy(r.begin(), r.end(), cov.begin() + static_cast<std::ptrdiff_t>(i * d));
  }
  return cov;
}

}  // namespace

SynthSpec SynthSpec::from_config(const KvConfig& cfg, const std::string& prefix) {
  SynthSpec spec;
  const auto num_classes = cfg.get_int(prefix + "classes", 2);
  if (num_classes < 1) throw UsageError(prefix + "classes must be >= 1");
  for (std::int64_t c = 0; c < num_classes; ++c) {
    const std::string suffix = "." + std::to_string(c);
    ClassSpec cls;
    const auto count = cfg.get_int(prefix + "count" + suffix, -1);
    if (count < 0) throw UsageError("missing " + prefix + "count" + suffix);
    cls.count = static_cast<std::size_t>(count);
    const auto mean = cfg.get(prefix + "mean" + suffix);
    if (!mean) throw UsageError("missing " + prefix + "mean" + suffix);
    cls.mean = parse_doubles(*mean, prefix + "mean" + suffix);
    cls.covariance = parse_covariance(cfg.get_string(prefix + "covariance" + suffix, "identity"),
                                      cls.mean.size(), prefix + "covariance" + suffix);
    spec.classes.push_back(std::move(cls));
  }
  for (const auto& item : split_list(cfg.get_string(prefix + "duplicates", ""), ", \t")) {
    const auto colon = item.find(':');
    DuplicatePlan plan;
    plan.source = static_cast<std::size_t>(parse_double(item.substr(0, colon), prefix + "duplicates"));
    plan.noise = colon == std::string::npos ? 0.0 : parse_double(item.substr(colon + 1), prefix + "duplicates");
    spec.duplicates.push_back(plan);
  }
  spec.noise_features = static_cast<std::size_t>(cfg.get_int(prefix + "noise_features", 0));
  spec.noise_scale = cfg.get_double(prefix + "noise_scale", 1.0);
  const std::string names = cfg.get_string(prefix + "names", "");
  if (to_lower(names) == "flow") {
    spec.feature_names.assign(flow::kFeatureNames.begin(), flow::kFeatureNames.end());
  } else if (!names.empty()) {
    spec.feature_names = split_list(names, ",");
  }
  return spec;
}

SyntheticData generate_synthetic(const SynthSpec& spec, std::uint64_t seed) {
  if (spec.classes.empty()) throw DataError("synthetic spec has no classes");
  const std::size_t d = spec.informative_features();
  if (d == 0) throw DataError("synthetic spec needs at least one informative feature");
  std::vector<Eigen::MatrixXd> factors;
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const auto& cls = spec.classes[c];
    if (cls.mean.size() != d || cls.covariance.size() != d * d) {
      throw DataError("class " + std::to_string(c) + " has inconsistent dimensions");
    }
    Eigen::MatrixXd cov(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    for (std::size_t i = 0; i < d; ++i) {
      for (std::size_t j = 0; j < d; ++j) {
        cov(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cls.covariance[i * d + j];
      }
    }
    if (!cov.isApprox(cov.transpose(), 1e-12)) {
      throw DataError("covariance of class " + std::to_string(c) + " is not symmetric");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    const auto& lambda = eig.eigenvalues();
    const double scale = std::max(1.0, lambda.cwiseAbs().maxCoeff());
    if (lambda.minCoeff() < -1e-10 * scale) {
      throw DataError("covariance of class " + std::to_string(c) + " is not positive semidefinite");
    }
    factors.push_back(eig.eigenvectors() * lambda.cwiseMax(0.0).cwiseSqrt().asDiagonal());
  }
  for (const auto& dup : spec.duplicates) {
    if (dup.source >= d) throw DataError("duplicate source " + std::to_string(dup.source) + " out of range");
    if (dup.noise < 0.0) throw DataError("duplicate noise must be non-negative");
  }

  const std::size_t width = spec.width();
  std::vector<std::string> names = spec.feature_names;
  if (names.empty()) {
    for (std::size_t j = 0; j < width; ++j) names.push_back("f" + std::to_string(j));
  } else if (names.size() != width) {
    throw DataError("synthetic spec names " + std::to_string(names.size()) + " columns but produces " +
                    std::to_string(width));
  }
  std::vector<std::string> class_names = default_class_names();
  for (std::size_t c = class_names.size(); c < spec.classes.size(); ++c) {
    class_names.push_back("class" + std::to_string(c));
  }
  class_names.resize(std::max<std::size_t>(spec.classes.size(), 1));

  SyntheticData out{Dataset(names, class_names), {}, {}};
  for (std::size_t j = 0; j < width; ++j) {
    out.roles.push_back(j < d ? FeatureRole::Informative
                              : j < d + spec.duplicates.size() ? FeatureRole::Duplicate
                                                               : FeatureRole::Noise);
    out.duplicate_of.push_back(j);
  }
  for (std::size_t k = 0; k < spec.duplicates.size(); ++k) {
    out.duplicate_of[d + k] = spec.duplicates[k].source;
  }

  Rng rng(seed);
  Eigen::VectorXd z(static_cast<Eigen::Index>(d));
  std::vector<double> x(width);
  for (std::size_t c = 0; c < spec.classes.size(); ++c) {
    const auto& cls = spec.classes[c];
    for (std::size_t n = 0; n < cls.count; ++n) {
      for (Eigen::Index i = 0; i < z.size(); ++i) z(i) = rng.normal();
      const Eigen::VectorXd v = factors[c] * z;
      for (std::size_t i = 0; i < d; ++i) x[i] = cls.mean[i] + v(static_cast<Eigen::Index>(i));
      for (std::size_t k = 0; k < spec.duplicates.size(); ++k) {
        const auto& dup = spec.duplicates[k];
        x[d + k] = x[dup.source] + (dup.noise > 0.0 ? dup.noise * rng.normal() : 0.0);
      }
      for (std::size_t k = 0; k < spec.noise_features; ++k) {
        x[d + spec.duplicates.size() + k] = spec.noise_scale * rng.normal();
      }
      out.dataset.add(x, static_cast<int>(c));
    }
  }
  return out;
}

std::string default_synth_spec_text() {
  return R"(# Two-cluster substrate over the 28 flow-feature columns.
# 8 informative Gaussian features, 6 redundant copies, 14 pure-noise features.
# The within-class correlation -0.1225 = -(0.7/2)^2 cancels the correlation the
# class shift induces, so informative features are pairwise uncorrelated over
# the mixture while the clusters stay well separated along the shift.
[synth]
classes = 2
count.0 = 500
count.1 = 500
mean.0 = 0, 0, 0, 0, 0, 0, 0, 0
mean.1 = 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7, 0.7
covariance.0 = equicorr:-0.1225
covariance.1 = equicorr:-0.1225
duplicates = 0:0, 1:0, 2:0.05, 3:0.05, 4:0.1, 5:0.1
noise_features = 14
noise_scale = 1
names = flow
)";
}

}  // namespace torclass::data
