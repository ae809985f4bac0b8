#include "torclass/mlp.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <sstream>

#include "torclass/error.hpp"
#include "torclass/levenberg_marquardt.hpp"
#include "torclass/random.hpp"

namespace torclass::mlp {

namespace {

// Weights past this magnitude saturate every unit; treated as divergence.
constexpr double kMaxParameterMagnitude = 1e6;

Eigen::Index idx(std::size_t v) { return static_cast<Eigen::Index>(v); }

Eigen::MatrixXd sigmoid(const Eigen::MatrixXd& z) {
  return z.unaryExpr([](double v) { return 1.0 / (1.0 + std::exp(-v)); });
}

void check_layout(const Layout& layout) {
  if (layout.inputs == 0 || layout.hidden == 0 || layout.outputs == 0) {
    throw UsageError("MLP layers must be non-empty");
  }
}

}  // namespace

Eigen::VectorXd MlpModel::flatten() const {
  Eigen::VectorXd theta(idx(parameter_count()));
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < w1.rows(); ++j)
    for (Eigen::Index i = 0; i < w1.cols(); ++i) theta(k++) = w1(j, i);
  for (Eigen::Index j = 0; j < b1.size(); ++j) theta(k++) = b1(j);
  for (Eigen::Index o = 0; o < w2.rows(); ++o)
    for (Eigen::Index j = 0; j < w2.cols(); ++j) theta(k++) = w2(o, j);
  for (Eigen::Index o = 0; o < b2.size(); ++o) theta(k++) = b2(o);
  return theta;
}

void MlpModel::unflatten(const Eigen::VectorXd& theta) {
  if (theta.size() != idx(parameter_count())) throw UsageError("parameter vector has wrong length");
  Eigen::Index k = 0;
  for (Eigen::Index j = 0; j < w1.rows(); ++j)
    for (Eigen::Index i = 0; i < w1.cols(); ++i) w1(j, i) = theta(k++);
  for (Eigen::Index j = 0; j < b1.size(); ++j) b1(j) = theta(k++);
  for (Eigen::Index o = 0; o < w2.rows(); ++o)
    for (Eigen::Index j = 0; j < w2.cols(); ++j) w2(o, j) = theta(k++);
  for (Eigen::Index o = 0; o < b2.size(); ++o) b2(o) = theta(k++);
}

MlpModel zeros(const Layout& layout) {
  check_layout(layout);
  MlpModel m;
  m.layout = layout;
  m.w1 = Eigen::MatrixXd::Zero(idx(layout.hidden), idx(layout.inputs));
  m.b1 = Eigen::VectorXd::Zero(idx(layout.hidden));
  m.w2 = Eigen::MatrixXd::Zero(idx(layout.outputs), idx(layout.hidden));
  m.b2 = Eigen::VectorXd::Zero(idx(layout.outputs));
  return m;
}

MlpModel init(const Layout& layout, std::uint64_t seed) {
  MlpModel m = zeros(layout);
  Rng rng(seed);
  const double r1 = std::sqrt(6.0 / static_cast<double>(layout.inputs + layout.hidden));
  const double r2 = std::sqrt(6.0 / static_cast<double>(layout.hidden + layout.outputs));
  for (Eigen::Index j = 0; j < m.w1.rows(); ++j)
    for (Eigen::Index i = 0; i < m.w1.cols(); ++i) m.w1(j, i) = rng.uniform(-r1, r1);
  for (Eigen::Index o = 0; o < m.w2.rows(); ++o)
    for (Eigen::Index j = 0; j < m.w2.cols(); ++j) m.w2(o, j) = rng.uniform(-r2, r2);
  return m;
}

Activations forward(const MlpModel& model, std::span<const double> x) {
  if (x.size() != model.layout.inputs) {
    throw DataError("input width " + std::to_string(x.size()) + " does not match model input width " +
                    std::to_string(model.layout.inputs));
  }
  const Eigen::Map<const Eigen::VectorXd> xv(x.data(), idx(x.size()));
  Activations a;
  a.hidden = (model.w1 * xv + model.b1).array().tanh().matrix();
  a.output = sigmoid(model.w2 * a.hidden + model.b2);
  return a;
}

Batch make_batch(const data::Dataset& ds) {
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), 0);
  return make_batch(ds, rows);
}

Batch make_batch(const data::Dataset& ds, std::span<const std::size_t> rows) {
  Batch b;
  b.x.resize(idx(rows.size()), idx(ds.width()));
  b.targets = Eigen::MatrixXd::Zero(idx(rows.size()), idx(std::max<std::size_t>(ds.num_classes(), 2)));
  for (std::size_t r = 0; r < rows.size(); ++r) {
    const auto x = ds.row(rows[r]);
    for (std::size_t j = 0; j < x.size(); ++j) b.x(idx(r), idx(j)) = x[j];
    b.targets(idx(r), ds.label(rows[r])) = 1.0;
  }
  return b;
}

Eigen::MatrixXd forward_batch(const MlpModel& model, const Eigen::MatrixXd& x, Eigen::MatrixXd* hidden) {
  if (x.cols() != idx(model.layout.inputs)) throw DataError("batch width does not match model input width");
  Eigen::MatrixXd h = ((x * model.w1.transpose()).rowwise() + model.b1.transpose()).array().tanh().matrix();
  Eigen::MatrixXd y = sigmoid((h * model.w2.transpose()).rowwise() + model.b2.transpose());
  if (hidden) *hidden = std::move(h);
  return y;
}

double loss(const MlpModel& model, const Batch& batch) {
  if (batch.size() == 0) throw DataError("loss of an empty batch");
  const Eigen::MatrixXd y = forward_batch(model, batch.x);
  return 0.5 * (y - batch.targets).squaredNorm() / static_cast<double>(batch.size());
}

Eigen::VectorXd gradient(const MlpModel& model, const Batch& batch) {
  if (batch.size() == 0) throw DataError("gradient of an empty batch");
  Eigen::MatrixXd h;
  const Eigen::MatrixXd y = forward_batch(model, batch.x, &h);
  const double n = static_cast<double>(batch.size());
  const Eigen::MatrixXd dz2 = ((y - batch.targets).array() * y.array() * (1.0 - y.array())).matrix() / n;
  const Eigen::MatrixXd dz1 = ((dz2 * model.w2).array() * (1.0 - h.array().square())).matrix();

  MlpModel g = zeros(model.layout);
  g.w2 = dz2.transpose() * h;
  g.b2 = dz2.colwise().sum().transpose();
  g.w1 = dz1.transpose() * batch.x;
  g.b1 = dz1.colwise().sum().transpose();
  return g.flatten();
}

void residual_jacobian(const MlpModel& model, const Batch& batch, Eigen::VectorXd& residuals,
                       Eigen::MatrixXd& jacobian) {
  const auto& L = model.layout;
  const Eigen::Index n_in = idx(L.inputs), n_h = idx(L.hidden), n_out = idx(L.outputs);
  Eigen::MatrixXd h;
  const Eigen::MatrixXd y = forward_batch(model, batch.x, &h);
  const Eigen::Index rows = batch.size() * n_out;
  residuals.resize(rows);
  jacobian.setZero(rows, idx(L.parameter_count()));

  const Eigen::Index off_b1 = n_h * n_in;
  const Eigen::Index off_w2 = off_b1 + n_h;
  const Eigen::Index off_b2 = off_w2 + n_out * n_h;
  for (Eigen::Index i = 0; i < batch.size(); ++i) {
    for (Eigen::Index o = 0; o < n_out; ++o) {
      const Eigen::Index r = i * n_out + o;
      residuals(r) = y(i, o) - batch.targets(i, o);
      const double s = y(i, o) * (1.0 - y(i, o));
      for (Eigen::Index j = 0; j < n_h; ++j) {
        jacobian(r, off_w2 + o * n_h + j) = s * h(i, j);
        const double back = s * model.w2(o, j) * (1.0 - h(i, j) * h(i, j));
        jacobian(r, off_b1 + j) = back;
        for (Eigen::Index k = 0; k < n_in; ++k) jacobian(r, j * n_in + k) = back * batch.x(i, k);
      }
      jacobian(r, off_b2 + o) = s;
    }
  }
}

void TrainConfig::validate() const {
  if (max_epochs == 0) throw UsageError("max_epochs must be positive");
  if (mode == TrainMode::BpSgd && (!(learning_rate > 0.0) || batch_size == 0)) {
    throw UsageError("learning rate and batch size must be positive");
  }
  if (mode == TrainMode::Lm &&
      (!(lm_mu_init > 0.0) || !(lm_mu_up > 1.0) || !(lm_mu_down > 0.0) || !(lm_mu_down < 1.0) ||
       !(lm_mu_max > lm_mu_init) || lm_min_gradient < 0.0)) {
    throw UsageError("invalid Levenberg-Marquardt damping schedule");
  }
  if (patience == 0) throw UsageError("patience must be >= 1");
}

namespace {

void check_batches(const MlpModel& model, const Batch& train, const Batch& val) {
  if (train.size() == 0 || val.size() == 0) throw DataError("training and validation sets must be non-empty");
  if (train.x.cols() != idx(model.layout.inputs) || val.x.cols() != idx(model.layout.inputs)) {
    throw DataError("data width does not match model input width");
  }
  if (train.targets.cols() != idx(model.layout.outputs)) throw DataError("target width does not match outputs");
}

// Tracks the best validation loss and the patience counter.
struct EarlyStopper {
  double best_val;
  Eigen::VectorXd best_theta;
  std::size_t best_epoch = 0;
  std::size_t failures = 0;
  std::size_t patience;

  // Returns false once patience is exhausted.
  bool update(std::size_t epoch, const Eigen::VectorXd& theta, double val) {
    if (val < best_val) {
      best_val = val;
      best_theta = theta;
      best_epoch = epoch;
      failures = 0;
      return true;
    }
    return ++failures < patience;
  }
};

}  // namespace

TrainResult train_bp(MlpModel model, const Batch& train, const Batch& val, const TrainConfig& cfg) {
  cfg.validate();
  check_batches(model, train, val);
  Rng rng(cfg.seed);
  TrainHistory history;
  EarlyStopper stopper{loss(model, val), model.flatten(), 0, 0, cfg.patience};

  std::vector<Eigen::Index> order(static_cast<std::size_t>(train.size()));
  std::iota(order.begin(), order.end(), 0);
  Batch mini;
  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    rng.shuffle(std::span<Eigen::Index>(order));
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      const Eigen::Index m = idx(end - start);
      mini.x.resize(m, train.x.cols());
      mini.targets.resize(m, train.targets.cols());
      for (std::size_t r = start; r < end; ++r) {
        mini.x.row(idx(r - start)) = train.x.row(order[r]);
        mini.targets.row(idx(r - start)) = train.targets.row(order[r]);
      }
      Eigen::VectorXd theta = model.flatten() - cfg.learning_rate * gradient(model, mini);
      if (!theta.allFinite() || theta.cwiseAbs().maxCoeff() > kMaxParameterMagnitude) {
        throw DivergenceError(epoch, "parameter overflow");
      }
      model.unflatten(theta);
    }
    const double tl = loss(model, train);
    const double vl = loss(model, val);
    if (!std::isfinite(tl) || !std::isfinite(vl)) throw DivergenceError(epoch, "non-finite loss");
    history.train_loss.push_back(tl);
    history.val_loss.push_back(vl);
    if (!stopper.update(epoch, model.flatten(), vl)) {
      history.stop_reason = "validation_patience";
      break;
    }
  }
  if (history.stop_reason.empty()) history.stop_reason = "max_epochs";
  history.best_epoch = stopper.best_epoch;
  model.unflatten(stopper.best_theta);
  return {std::move(model), std::move(history)};
}

namespace {

class MlpLeastSquares : public lm::LeastSquaresProblem {
 public:
  MlpLeastSquares(const MlpModel& shape, const Batch& batch) : model_(shape), batch_(batch) {}

  Eigen::Index parameter_count() const override { return idx(model_.parameter_count()); }
  double normalizer() const override { return static_cast<double>(batch_.size()); }

  void residuals(const Eigen::VectorXd& theta, Eigen::VectorXd& r) const override {
    model_.unflatten(theta);
    const Eigen::MatrixXd y = forward_batch(model_, batch_.x);
    const Eigen::MatrixXd diff = y - batch_.targets;
    r.resize(diff.size());
    for (Eigen::Index i = 0; i < diff.rows(); ++i)
      for (Eigen::Index o = 0; o < diff.cols(); ++o) r(i * diff.cols() + o) = diff(i, o);
  }

  void jacobian(const Eigen::VectorXd& theta, Eigen::VectorXd& r, Eigen::MatrixXd& J) const override {
    model_.unflatten(theta);
    residual_jacobian(model_, batch_, r, J);
  }

 private:
  mutable MlpModel model_;
  const Batch& batch_;
};

}  // namespace

TrainResult train_lm(MlpModel model, const Batch& train, const Batch& val, const TrainConfig& cfg) {
  cfg.validate();
  check_batches(model, train, val);
  TrainHistory history;
  EarlyStopper stopper{loss(model, val), model.flatten(), 0, 0, cfg.patience};

  lm::Options opts;
  opts.mu_init = cfg.lm_mu_init;
  opts.mu_up = cfg.lm_mu_up;
  opts.mu_down = cfg.lm_mu_down;
  opts.mu_max = cfg.lm_mu_max;
  opts.max_iterations = cfg.max_epochs;
  opts.min_gradient = cfg.lm_min_gradient;

  MlpLeastSquares problem(model, train);
  MlpModel probe = model;
  const auto result = lm::minimize(
      problem, model.flatten(), opts,
      [&](std::size_t iter, const Eigen::VectorXd& theta, double train_loss) {
        probe.unflatten(theta);
        const double vl = loss(probe, val);
        if (!std::isfinite(vl)) throw DivergenceError(iter, "non-finite validation loss");
        history.train_loss.push_back(train_loss);
        history.val_loss.push_back(vl);
        return stopper.update(iter, theta, vl);
      });
  history.stop_reason = result.reason == lm::StopReason::Callback
                            ? "validation_patience"
                            : std::string(lm::stop_reason_name(result.reason));
  history.best_epoch = stopper.best_epoch;
  model.unflatten(stopper.best_theta);
  return {std::move(model), std::move(history)};
}

TrainResult train(MlpModel model, const Batch& train_set, const Batch& val, const TrainConfig& cfg) {
  return cfg.mode == TrainMode::Lm ? train_lm(std::move(model), train_set, val, cfg)
                                   : train_bp(std::move(model), train_set, val, cfg);
}

int predict_from_outputs(std::span<const double> outputs) {
  int best = 0;
  for (std::size_t o = 1; o < outputs.size(); ++o) {
    if (outputs[o] > outputs[static_cast<std::size_t>(best)]) best = static_cast<int>(o);
  }
  return best;
}

int predict(const MlpModel& model, std::span<const double> x) {
  const auto a = forward(model, x);
  return predict_from_outputs(std::span<const double>(a.output.data(), static_cast<std::size_t>(a.output.size())));
}

namespace {

void write_matrix(std::ostream& out, const char* name, const Eigen::MatrixXd& m) {
  char buf[40];
  out << name << '\n';
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", m(r, c));
      out << (c ? " " : "") << buf;
    }
    out << '\n';
  }
}

void read_matrix(std::istream& in, const char* name, Eigen::MatrixXd& m) {
  std::string tag;
  if (!(in >> tag) || tag != name) throw DataError(std::string("MLP model: expected block '") + name + "'");
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c)
      if (!(in >> m(r, c))) throw DataError(std::string("MLP model: truncated block '") + name + "'");
}

}  // namespace

void write_model(std::ostream& out, const MlpModel& model) {
  out << "torclass-mlp 1\n";
  out << "layout " << model.layout.inputs << ' ' << model.layout.hidden << ' ' << model.layout.outputs << '\n';
  out << "activation tanh sigmoid\n";
  write_matrix(out, "w1", model.w1);
  write_matrix(out, "b1", model.b1.transpose());
  write_matrix(out, "w2", model.w2);
  write_matrix(out, "b2", model.b2.transpose());
}

MlpModel read_model(std::istream& in) {
  std::string tag, act1, act2;
  int version = 0;
  if (!(in >> tag >> version) || tag != "torclass-mlp" || version != 1) {
    throw DataError("not a torclass-mlp v1 model");
  }
  Layout layout;
  if (!(in >> tag >> layout.inputs >> layout.hidden >> layout.outputs) || tag != "layout") {
    throw DataError("MLP model: bad layout line");
  }
  if (!(in >> tag >> act1 >> act2) || tag != "activation" || act1 != "tanh" || act2 != "sigmoid") {
    throw DataError("MLP model: unsupported activation line");
  }
  MlpModel m = zeros(layout);
  Eigen::MatrixXd b1(1, m.b1.size()), b2(1, m.b2.size());
  read_matrix(in, "w1", m.w1);
  read_matrix(in, "b1", b1);
  read_matrix(in, "w2", m.w2);
  read_matrix(in, "b2", b2);
  m.b1 = b1.transpose();
  m.b2 = b2.transpose();
  return m;
}

void write_history_csv(std::ostream& out, const TrainHistory& history) {
  char a[40], b[40];
  out << "epoch,train_loss,val_loss\n";
  for (std::size_t e = 0; e < history.epochs(); ++e) {
    std::snprintf(a, sizeof a, "%.17g", history.train_loss[e]);
    std::snprintf(b, sizeof b, "%.17g", history.val_loss[e]);
    out << (e + 1) << ',' << a << ',' << b << '\n';
  }
  out << "# stop_reason=" << history.stop_reason << " best_epoch=" << history.best_epoch << '\n';
}

}  // namespace torclass::mlp
