#pragma once

#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "torclass/dataset.hpp"
#include "torclass/mlp.hpp"
#include "torclass/svm.hpp"

namespace torclass::pipeline {

enum class ClassifierKind { Ann, Svm };

/// Everything needed to classify raw flow rows: the feature names the model
/// was trained on, the training-split scaler, and the classifier itself.
struct ModelBundle {
  std::string name;  // report column, e.g. "CFS-ANN"
  ClassifierKind kind = ClassifierKind::Ann;
  std::vector<std::string> features;
  data::Scaler scaler;
  std::optional<mlp::MlpModel> ann;
  std::vector<svm::SvmModel> svm;

  /// `raw` is an unscaled row in `features` order.
  int predict(std::span<const double> raw) const;
};

void write_bundle(std::ostream& out, const ModelBundle& bundle);
ModelBundle read_bundle(std::istream& in);

void save_bundle(const std::string& path, const ModelBundle& bundle);
ModelBundle load_bundle(const std::string& path);

}  // namespace torclass::pipeline
