#include "torclass/model_io.hpp"

#include <cstdio>
#include <fstream>

#include "torclass/error.hpp"
#include "torclass/kv_config.hpp"

namespace torclass::pipeline {

int ModelBundle::predict(std::span<const double> raw) const {
  const auto z = scaler.apply(raw);
  if (kind == ClassifierKind::Ann) return mlp::predict(*ann, z);
  return svm::predict(svm, z);
}

namespace {

void write_row(std::ostream& out, const std::vector<double>& values) {
  char buf[40];
  for (std::size_t i = 0; i < values.size(); ++i) {
    std::snprintf(buf, sizeof buf, "%.17g", values[i]);
    out << (i ? " " : "") << buf;
  }
  out << '\n';
}

std::string expect_line(std::istream& in, const std::string& what) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("model file truncated before " + what);
  return line;
}

std::string expect_tagged(std::istream& in, const std::string& tag) {
  const std::string line = expect_line(in, tag);
  if (line.rfind(tag + " ", 0) != 0) throw DataError("model file: expected '" + tag + "' line");
  return line.substr(tag.size() + 1);
}

// A malformed model file is bad data, not bad usage.
double model_number(const std::string& text, const std::string& what) {
  try {
    return parse_double(text, what);
  } catch (const UsageError& e) {
    throw DataError(std::string("model file: ") + e.what());
  }
}

std::vector<double> read_row(std::istream& in, std::size_t n, const std::string& what) {
  std::vector<double> out;
  for (const auto& item : split_list(expect_line(in, what), " ")) out.push_back(model_number(item, what));
  if (out.size() != n) throw DataError("model file: " + what + " has " + std::to_string(out.size()) + " values");
  return out;
}

}  // namespace

void write_bundle(std::ostream& out, const ModelBundle& b) {
  out << "torclass-model 1\n";
  out << "name " << b.name << '\n';
  out << "classifier " << (b.kind == ClassifierKind::Ann ? "ann" : "svm") << '\n';
  out << "features " << b.features.size() << '\n';
  for (const auto& f : b.features) out << f << '\n';
  out << "scaler\n";
  write_row(out, b.scaler.mean);
  write_row(out, b.scaler.std);
  std::vector<double> flags;
  for (bool c : b.scaler.constant) flags.push_back(c ? 1.0 : 0.0);
  write_row(out, flags);
  if (b.kind == ClassifierKind::Ann) {
    mlp::write_model(out, *b.ann);
  } else {
    svm::write_models(out, b.svm);
  }
}

ModelBundle read_bundle(std::istream& in) {
  if (trim(expect_line(in, "header")) != "torclass-model 1") throw DataError("not a torclass-model v1 file");
  ModelBundle b;
  b.name = expect_tagged(in, "name");
  const std::string kind = trim(expect_tagged(in, "classifier"));
  if (kind == "ann") {
    b.kind = ClassifierKind::Ann;
  } else if (kind == "svm") {
    b.kind = ClassifierKind::Svm;
  } else {
    throw DataError("model file: unknown classifier '" + kind + "'");
  }
  const auto count = static_cast<std::size_t>(model_number(expect_tagged(in, "features"), "features"));
  for (std::size_t i = 0; i < count; ++i) b.features.push_back(trim(expect_line(in, "feature names")));
  if (trim(expect_line(in, "scaler")) != "scaler") throw DataError("model file: expected scaler block");
  b.scaler.mean = read_row(in, count, "scaler mean");
  b.scaler.std = read_row(in, count, "scaler std");
  for (double f : read_row(in, count, "scaler flags")) b.scaler.constant.push_back(f != 0.0);
  if (b.kind == ClassifierKind::Ann) {
    b.ann = mlp::read_model(in);
    if (b.ann->layout.inputs != count) throw DataError("model file: MLP input width does not match features");
  } else {
    b.svm = svm::read_models(in);
    for (const auto& m : b.svm) {
      if (m.width != count) throw DataError("model file: SVM width does not match features");
    }
  }
  return b;
}

void save_bundle(const std::string& path, const ModelBundle& bundle) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write model file '" + path + "'");
  write_bundle(out, bundle);
}

ModelBundle load_bundle(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open model file '" + path + "'");
  return read_bundle(in);
}

}  // namespace torclass::pipeline
