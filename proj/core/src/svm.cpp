#include "torclass/svm.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <string>

#include "torclass/error.hpp"
#include "torclass/random.hpp"

namespace torclass::svm {

void Kernel::validate() const {
  if (kind == KernelKind::Rbf && !(std::isfinite(gamma) && gamma > 0.0)) {
    throw UsageError("rbf kernel needs a finite positive gamma");
  }
}

double kernel_eval(const Kernel& k, std::span<const double> x, std::span<const double> z) {
  if (x.size() != z.size()) throw DataError("kernel arguments differ in width");
  if (k.kind == KernelKind::Linear) {
    double dot = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) dot += x[i] * z[i];
    return dot;
  }
  double sq = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - z[i];
    sq += d * d;
  }
  return std::exp(-k.gamma * sq);
}

void SmoConfig::validate() const {
  if (!(C > 0.0) || !std::isfinite(C)) throw UsageError("SVM C must be positive");
  if (!(tolerance > 0.0)) throw UsageError("SMO tolerance must be positive");
  if (max_passes == 0) throw UsageError("SMO max_passes must be >= 1");
}

Kernel default_kernel(std::size_t width) {
  return Kernel::rbf(1.0 / static_cast<double>(std::max<std::size_t>(width, 1)));
}

namespace {

// Rows with a full kernel matrix cached up front; larger sets evaluate on demand.
constexpr std::size_t kMaxCachedRows = 2500;
// Relative threshold below which a pair update counts as no progress.
constexpr double kStepEps = 1e-10;

class SmoSolver {
 public:
  SmoSolver(std::span<const double> x, std::size_t width, std::span<const int> y, const Kernel& kernel,
            const SmoConfig& cfg)
      : x_(x), width_(width), y_(y), kernel_(kernel), cfg_(cfg), n_(y.size()), rng_(cfg.seed) {
    alpha_.assign(n_, 0.0);
    error_.resize(n_);
    for (std::size_t i = 0; i < n_; ++i) error_[i] = -static_cast<double>(y_[i]);
    if (n_ <= kMaxCachedRows) {
      gram_.resize(n_ * n_);
      for (std::size_t i = 0; i < n_; ++i) {
        for (std::size_t j = i; j < n_; ++j) {
          const double k = kernel_eval(kernel_, row(i), row(j));
          gram_[i * n_ + j] = k;
          gram_[j * n_ + i] = k;
        }
      }
    }
    max_iterations_ = cfg.max_iterations ? cfg.max_iterations : 10 * n_;
  }

  BinaryTraining run() {
    BinaryTraining out;
    std::size_t changed = 0;
    bool examine_all = true;
    bool capped = false;
    while (!capped) {
      changed = 0;
      if (examine_all) {
        if (out.passes >= cfg_.max_passes) {
          capped = true;
          break;
        }
        ++out.passes;
        for (std::size_t i = 0; i < n_ && !capped; ++i) {
          changed += examine(i);
          capped = iterations_ >= max_iterations_;
        }
      } else {
        for (std::size_t i = 0; i < n_ && !capped; ++i) {
          if (non_bound(i)) changed += examine(i);
          capped = iterations_ >= max_iterations_;
        }
      }
      if (changed > 0) {
        examine_all = false;
      } else if (examine_all) {
        // A quiet full sweep: settle b from the KKT conditions and stop unless
        // the refit exposes a violation.
        if (!refit_bias()) break;
      } else {
        examine_all = true;
      }
    }

    out.alphas = alpha_;
    out.signs.assign(y_.begin(), y_.end());
    out.iterations = iterations_;
    out.model = build_model();
    out.converged = !capped && max_kkt_violation(out, x_) <= cfg_.tolerance;
    return out;
  }

 private:
  std::span<const double> row(std::size_t i) const { return x_.subspan(i * width_, width_); }

  double k(std::size_t i, std::size_t j) const {
    return gram_.empty() ? kernel_eval(kernel_, row(i), row(j)) : gram_[i * n_ + j];
  }

  bool non_bound(std::size_t i) const { return alpha_[i] > 0.0 && alpha_[i] < cfg_.C; }

  bool violates(std::size_t i) const {
    const double r = error_[i] * y_[i];
    return (r < -cfg_.tolerance && alpha_[i] < cfg_.C) || (r > cfg_.tolerance && alpha_[i] > 0.0);
  }

  /// Platt's single threshold can drift outside the interval the KKT
  /// conditions allow. Resets b to the free-vector mean, or to the middle of
  /// the feasible interval when every alpha is at a bound. Returns true when
  /// some row still violates KKT afterwards.
  bool refit_bias() {
    double free_sum = 0.0, lo = -std::numeric_limits<double>::infinity(), hi = std::numeric_limits<double>::infinity();
    std::size_t free_count = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      const double g = error_[i] + y_[i] - bias_;  // f(x_i) without the threshold
      const double edge = y_[i] - g;
      if (non_bound(i)) {
        free_sum += edge;
        ++free_count;
      } else if ((alpha_[i] <= 0.0) == (y_[i] > 0)) {
        lo = std::max(lo, edge);
      } else {
        hi = std::min(hi, edge);
      }
    }
    double b;
    if (free_count > 0) {
      b = free_sum / static_cast<double>(free_count);
    } else if (std::isfinite(lo) && std::isfinite(hi)) {
      b = 0.5 * (lo + hi);
    } else {
      b = std::isfinite(lo) ? lo : (std::isfinite(hi) ? hi : bias_);
    }
    const double db = b - bias_;
    for (auto& e : error_) e += db;
    bias_ = b;
    for (std::size_t i = 0; i < n_; ++i) {
      if (violates(i)) return true;
    }
    return false;
  }

  bool take_step(std::size_t i1, std::size_t i2) {
    if (i1 == i2) return false;
    const double C = cfg_.C;
    const double a1 = alpha_[i1], a2 = alpha_[i2];
    const double y1 = y_[i1], y2 = y_[i2];
    const double e1 = error_[i1], e2 = error_[i2];
    const double s = y1 * y2;
    double lo, hi;
    if (y1 != y2) {
      lo = std::max(0.0, a2 - a1);
      hi = std::min(C, C + a2 - a1);
    } else {
      lo = std::max(0.0, a2 + a1 - C);
      hi = std::min(C, a2 + a1);
    }
    if (hi - lo <= kStepEps * C) return false;

    const double k11 = k(i1, i1), k12 = k(i1, i2), k22 = k(i2, i2);
    const double eta = k11 + k22 - 2.0 * k12;
    double a2_new;
    if (eta > 0.0) {
      a2_new = std::clamp(a2 + y2 * (e1 - e2) / eta, lo, hi);
    } else {
      // Objective along the constraint line is linear; compare the end points.
      const double f1 = y1 * (e1 - bias_) - a1 * k11 - s * a2 * k12;
      const double f2 = y2 * (e2 - bias_) - s * a1 * k12 - a2 * k22;
      const double l1 = a1 + s * (a2 - lo);
      const double h1 = a1 + s * (a2 - hi);
      const double lobj = l1 * f1 + lo * f2 + 0.5 * l1 * l1 * k11 + 0.5 * lo * lo * k22 + s * lo * l1 * k12;
      const double hobj = h1 * f1 + hi * f2 + 0.5 * h1 * h1 * k11 + 0.5 * hi * hi * k22 + s * hi * h1 * k12;
      if (lobj < hobj - kStepEps) {
        a2_new = lo;
      } else if (lobj > hobj + kStepEps) {
        a2_new = hi;
      } else {
        a2_new = a2;
      }
    }
    if (std::abs(a2_new - a2) < kStepEps * (a2_new + a2 + kStepEps)) return false;

    // Rounding in lo/hi and the a1 update can leave an alpha a hair inside a
    // bound, which would count it as a free vector.
    const auto snap = [C](double a) { return a < kStepEps * C ? 0.0 : (a > C * (1.0 - kStepEps) ? C : a); };
    a2_new = snap(a2_new);
    const double a1_new = snap(a1 + s * (a2 - a2_new));

    const double d1 = y1 * (a1_new - a1);
    const double d2 = y2 * (a2_new - a2);
    const double b1 = bias_ - e1 - d1 * k11 - d2 * k12;
    const double b2 = bias_ - e2 - d1 * k12 - d2 * k22;
    double b_new;
    if (a1_new > 0.0 && a1_new < C) {
      b_new = b1;
    } else if (a2_new > 0.0 && a2_new < C) {
      b_new = b2;
    } else {
      b_new = 0.5 * (b1 + b2);
    }
    const double db = b_new - bias_;
    for (std::size_t i = 0; i < n_; ++i) error_[i] += d1 * k(i1, i) + d2 * k(i2, i) + db;
    alpha_[i1] = a1_new;
    alpha_[i2] = a2_new;
    bias_ = b_new;
    ++iterations_;
    return true;
  }

  std::size_t examine(std::size_t i2) {
    if (!violates(i2)) return 0;

    std::size_t best = n_;
    double best_gap = -1.0;
    std::size_t nb_count = 0;
    for (std::size_t i = 0; i < n_; ++i) {
      if (!non_bound(i)) continue;
      ++nb_count;
      const double gap = std::abs(error_[i] - error_[i2]);
      if (gap > best_gap) {
        best_gap = gap;
        best = i;
      }
    }
    if (nb_count > 1 && take_step(best, i2)) return 1;

    const std::size_t start_nb = rng_.uniform_index(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t i1 = (start_nb + k) % n_;
      if (non_bound(i1) && take_step(i1, i2)) return 1;
    }
    const std::size_t start_all = rng_.uniform_index(n_);
    for (std::size_t k = 0; k < n_; ++k) {
      const std::size_t i1 = (start_all + k) % n_;
      if (take_step(i1, i2)) return 1;
    }
    return 0;
  }

  SvmModel build_model() const {
    SvmModel m;
    m.kernel = kernel_;
    m.C = cfg_.C;
    m.bias = bias_;
    m.width = width_;
    for (std::size_t i = 0; i < n_; ++i) {
      if (alpha_[i] <= 0.0) continue;
      m.coefficients.push_back(alpha_[i] * y_[i]);
      const auto r = row(i);
      m.support_vectors.insert(m.support_vectors.end(), r.begin(), r.end());
    }
    if (kernel_.kind == KernelKind::Linear) {
      std::vector<double> w(width_, 0.0);
      for (std::size_t s = 0; s < m.num_support_vectors(); ++s) {
        const auto sv = m.support_vector(s);
        for (std::size_t j = 0; j < width_; ++j) w[j] += m.coefficients[s] * sv[j];
      }
      m.weights = std::move(w);
    }
    return m;
  }

  std::span<const double> x_;
  std::size_t width_;
  std::span<const int> y_;
  Kernel kernel_;
  SmoConfig cfg_;
  std::size_t n_;
  Rng rng_;
  std::vector<double> alpha_;
  std::vector<double> error_;
  std::vector<double> gram_;
  double bias_ = 0.0;
  std::size_t iterations_ = 0;
  std::size_t max_iterations_ = 0;
};

}  // namespace

BinaryTraining train_binary(std::span<const double> x, std::size_t width, std::span<const int> signs,
                            const Kernel& kernel, const SmoConfig& cfg) {
  cfg.validate();
  kernel.validate();
  if (signs.empty()) throw DataError("SVM training set is empty");
  if (width == 0 || x.size() != signs.size() * width) throw DataError("SVM training matrix has the wrong shape");
  for (int s : signs) {
    if (s != 1 && s != -1) throw DataError("SVM labels must be +1 or -1");
  }
  return SmoSolver(x, width, signs, kernel, cfg).run();
}

std::vector<SvmModel> OvrTraining::models() const {
  std::vector<SvmModel> out;
  for (const auto& t : per_class) out.push_back(t.model);
  return out;
}

bool OvrTraining::converged() const {
  return std::all_of(per_class.begin(), per_class.end(), [](const auto& t) { return t.converged; });
}

OvrTraining train_ovr(const data::Dataset& train, const SmoConfig& cfg, const Kernel& kernel) {
  const auto counts = train.class_counts();
  for (std::size_t c = 0; c < counts.size(); ++c) {
    if (counts[c] == 0) throw DataError("class " + train.class_names()[c] + " has no training examples");
  }
  OvrTraining out;
  for (std::size_t c = 0; c < train.num_classes(); ++c) {
    std::vector<int> signs(train.size());
    for (std::size_t i = 0; i < train.size(); ++i) {
      signs[i] = train.label(i) == static_cast<int>(c) ? 1 : -1;
    }
    SmoConfig per = cfg;
    per.seed = cfg.seed + c;
    out.per_class.push_back(train_binary(train.values(), train.width(), signs, kernel, per));
  }
  return out;
}

double decision_value(const SvmModel& model, std::span<const double> x) {
  if (x.size() != model.width) throw DataError("input width does not match SVM model width");
  double f = model.bias;
  for (std::size_t s = 0; s < model.num_support_vectors(); ++s) {
    f += model.coefficients[s] * kernel_eval(model.kernel, model.support_vector(s), x);
  }
  return f;
}

double decision_value_linear(const SvmModel& model, std::span<const double> x) {
  if (!model.weights) return decision_value(model, x);
  if (x.size() != model.width) throw DataError("input width does not match SVM model width");
  double f = model.bias;
  for (std::size_t j = 0; j < x.size(); ++j) f += (*model.weights)[j] * x[j];
  return f;
}

int argmax_decision(std::span<const double> values) {
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

int predict(std::span<const SvmModel> models, std::span<const double> x) {
  if (models.empty()) throw UsageError("SVM prediction needs at least one model");
  std::vector<double> values;
  for (const auto& m : models) values.push_back(decision_value(m, x));
  return argmax_decision(values);
}

double dual_objective(std::span<const double> alphas, std::span<const int> signs, std::span<const double> x,
                      std::size_t width, const Kernel& kernel) {
  const std::size_t n = alphas.size();
  double linear = 0.0, quad = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    linear += alphas[i];
    if (alphas[i] == 0.0) continue;
    for (std::size_t j = 0; j < n; ++j) {
      if (alphas[j] == 0.0) continue;
      quad += alphas[i] * alphas[j] * signs[i] * signs[j] *
              kernel_eval(kernel, x.subspan(i * width, width), x.subspan(j * width, width));
    }
  }
  return linear - 0.5 * quad;
}

double primal_objective(const SvmModel& model, std::span<const double> x, std::span<const int> signs) {
  double norm_sq = 0.0;
  for (std::size_t a = 0; a < model.num_support_vectors(); ++a) {
    for (std::size_t b = 0; b < model.num_support_vectors(); ++b) {
      norm_sq += model.coefficients[a] * model.coefficients[b] *
                 kernel_eval(model.kernel, model.support_vector(a), model.support_vector(b));
    }
  }
  double hinge = 0.0;
  for (std::size_t i = 0; i < signs.size(); ++i) {
    const double margin = signs[i] * decision_value(model, x.subspan(i * model.width, model.width));
    hinge += std::max(0.0, 1.0 - margin);
  }
  return 0.5 * norm_sq + model.C * hinge;
}

double max_kkt_violation(const BinaryTraining& t, std::span<const double> x) {
  const auto& m = t.model;
  double worst = 0.0;
  for (std::size_t i = 0; i < t.alphas.size(); ++i) {
    const double yf = t.signs[i] * decision_value(m, x.subspan(i * m.width, m.width));
    double v;
    if (t.alphas[i] <= 0.0) {
      v = std::max(0.0, 1.0 - yf);
    } else if (t.alphas[i] >= m.C) {
      v = std::max(0.0, yf - 1.0);
    } else {
      v = std::abs(yf - 1.0);
    }
    worst = std::max(worst, v);
  }
  return worst;
}

void write_models(std::ostream& out, std::span<const SvmModel> models) {
  char buf[40];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return std::string(buf);
  };
  out << "torclass-svm 1\n";
  out << "models " << models.size() << '\n';
  for (std::size_t l = 0; l < models.size(); ++l) {
    const auto& m = models[l];
    out << "model " << l << '\n';
    if (m.kernel.kind == KernelKind::Linear) {
      out << "kernel linear\n";
    } else {
      out << "kernel rbf " << num(m.kernel.gamma) << '\n';
    }
    out << "C " << num(m.C) << '\n';
    out << "bias " << num(m.bias) << '\n';
    out << "support_vectors " << m.num_support_vectors() << ' ' << m.width << '\n';
    for (std::size_t s = 0; s < m.num_support_vectors(); ++s) {
      out << num(m.coefficients[s]);
      for (double v : m.support_vector(s)) out << ' ' << num(v);
      out << '\n';
    }
  }
}

std::vector<SvmModel> read_models(std::istream& in) {
  std::string tag;
  int version = 0;
  if (!(in >> tag >> version) || tag != "torclass-svm" || version != 1) {
    throw DataError("not a torclass-svm v1 model");
  }
  std::size_t count = 0;
  if (!(in >> tag >> count) || tag != "models") throw DataError("SVM model: bad models line");
  std::vector<SvmModel> models;
  for (std::size_t l = 0; l < count; ++l) {
    SvmModel m;
    std::size_t index = 0;
    std::string kind;
    if (!(in >> tag >> index) || tag != "model" || index != l) throw DataError("SVM model: bad model header");
    if (!(in >> tag >> kind) || tag != "kernel") throw DataError("SVM model: bad kernel line");
    if (kind == "linear") {
      m.kernel = Kernel::linear();
    } else if (kind == "rbf") {
      double gamma = 0.0;
      if (!(in >> gamma)) throw DataError("SVM model: missing rbf gamma");
      m.kernel = Kernel::rbf(gamma);
    } else {
      throw DataError("SVM model: unknown kernel '" + kind + "'");
    }
    std::size_t nsv = 0;
    if (!(in >> tag >> m.C) || tag != "C") throw DataError("SVM model: bad C line");
    if (!(in >> tag >> m.bias) || tag != "bias") throw DataError("SVM model: bad bias line");
    if (!(in >> tag >> nsv >> m.width) || tag != "support_vectors") {
      throw DataError("SVM model: bad support_vectors line");
    }
    m.coefficients.resize(nsv);
    m.support_vectors.resize(nsv * m.width);
    for (std::size_t s = 0; s < nsv; ++s) {
      if (!(in >> m.coefficients[s])) throw DataError("SVM model: truncated support vectors");
      for (std::size_t j = 0; j < m.width; ++j) {
        if (!(in >> m.support_vectors[s * m.width + j])) throw DataError("SVM model: truncated support vectors");
      }
    }
    if (m.kernel.kind == KernelKind::Linear) {
      std::vector<double> w(m.width, 0.0);
      for (std::size_t s = 0; s < nsv; ++s)
        for (std::size_t j = 0; j < m.width; ++j) w[j] += m.coefficients[s] * m.support_vectors[s * m.width + j];
      m.weights = std::move(w);
    }
    models.push_back(std::move(m));
  }
  return models;
}

}  // namespace torclass::svm
