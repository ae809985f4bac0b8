#pragma once

#include <array>
#include <cstdint>
#include <istream>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace torclass::metrics {

struct ConfusionMatrix {
  std::uint64_t tp = 0;
  std::uint64_t tn = 0;
  std::uint64_t fp = 0;
  std::uint64_t fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  /// Same tallies with the other class treated as positive.
  ConfusionMatrix flipped() const { return {tn, tp, fn, fp}; }
  bool operator==(const ConfusionMatrix&) const = default;
};

/// Exact fraction; den == 0 marks an undefined rate.
struct Ratio {
  std::uint64_t num = 0;
  std::uint64_t den = 0;

  bool defined() const { return den != 0; }
  std::optional<double> value() const;
  bool operator==(const Ratio&) const = default;
};

struct Rates {
  std::optional<double> acc;
  std::optional<double> dr;   // TP / (TP + FN)
  std::optional<double> fpr;  // FP / (FP + TN)
  std::optional<double> ppv;  // TP / (TP + FP)
};

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels, int positive_class);

Ratio accuracy_ratio(const ConfusionMatrix& cm);
Ratio detection_ratio(const ConfusionMatrix& cm);
Ratio false_positive_ratio(const ConfusionMatrix& cm);
Ratio precision_ratio(const ConfusionMatrix& cm);

Rates rates(const ConfusionMatrix& cm);

/// The seven rows of the comparison table, in display order.
enum class ReportRow { DrTor, FprTor, PpvTor, DrNonTor, FprNonTor, PpvNonTor, OverallAcc };
inline constexpr std::size_t kReportRows = 7;
std::string_view row_label(ReportRow row);

struct ClassReport {
  std::array<Ratio, kReportRows> cells;

  const Ratio& at(ReportRow row) const { return cells[static_cast<std::size_t>(row)]; }
};

/// Binary labels: 1 = Tor, 0 = NonTor.
ClassReport build_report(std::span<const int> predictions, std::span<const int> labels);

/// Percentage with one decimal, rounded half away from zero from the exact
/// fraction. Undefined cells render as "-".
std::string format_percent(const Ratio& r);

/// A named report column; `reported` columns carry fixed strings instead of
/// computed ratios.
struct ReportColumn {
  std::string name;
  std::optional<ClassReport> report;
  std::array<std::string, kReportRows> fixed{};
};

/// Reference values published for C4.5 on the same dataset.
ReportColumn c45_reference_column();

void write_report_text(std::ostream& out, std::span<const ReportColumn> columns);
void write_report_csv(std::ostream& out, std::span<const ReportColumn> columns);

/// Parses a report CSV back into column name -> 7 cell strings.
std::vector<std::pair<std::string, std::array<std::string, kReportRows>>> read_report_csv(std::istream& in);

}  // namespace torclass::metrics
