#include "torclass/metrics.hpp"

#include <algorithm>
#include <string>

#include "torclass/error.hpp"

namespace torclass::metrics {

std::optional<double> Ratio::value() const {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

ConfusionMatrix confusion(std::span<const int> predictions, std::span<const int> labels, int positive_class) {
  if (predictions.size() != labels.size()) throw DataError("predictions and labels differ in length");
  if (predictions.empty()) throw DataError("confusion matrix of zero examples");
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const bool actual = labels[i] == positive_class;
    const bool predicted = predictions[i] == positive_class;
    if (actual && predicted) {
      ++cm.tp;
    } else if (actual) {
      ++cm.fn;
    } else if (predicted) {
      ++cm.fp;
    } else {
      ++cm.tn;
    }
  }
  return cm;
}

Ratio accuracy_ratio(const ConfusionMatrix& cm) { return {cm.tp + cm.tn, cm.total()}; }
Ratio detection_ratio(const ConfusionMatrix& cm) { return {cm.tp, cm.tp + cm.fn}; }
Ratio false_positive_ratio(const ConfusionMatrix& cm) { return {cm.fp, cm.fp + cm.tn}; }
Ratio precision_ratio(const ConfusionMatrix& cm) { return {cm.tp, cm.tp + cm.fp}; }

Rates rates(const ConfusionMatrix& cm) {
  return {accuracy_ratio(cm).value(), detection_ratio(cm).value(), false_positive_ratio(cm).value(),
          precision_ratio(cm).value()};
}

std::string_view row_label(ReportRow row) {
  switch (row) {
    case ReportRow::DrTor: return "DR (Tor) %";
    case ReportRow::FprTor: return "FPR (Tor) %";
    case ReportRow::PpvTor: return "PPV (Tor) %";
    case ReportRow::DrNonTor: return "DR (nonTor) %";
    case ReportRow::FprNonTor: return "FPR (nonTor) %";
    case ReportRow::PpvNonTor: return "PPV (nonTor) %";
    case ReportRow::OverallAcc: return "Overall ACC. %";
  }
  return "";
}

ClassReport build_report(std::span<const int> predictions, std::span<const int> labels) {
  const auto tor = confusion(predictions, labels, 1);
  const auto nontor = confusion(predictions, labels, 0);
  ClassReport r;
  r.cells = {detection_ratio(tor),    false_positive_ratio(tor),    precision_ratio(tor),
             detection_ratio(nontor), false_positive_ratio(nontor), precision_ratio(nontor),
             accuracy_ratio(tor)};
  return r;
}

std::string format_percent(const Ratio& r) {
  if (!r.defined()) return "-";
  // tenths of a percent: round(1000 * num / den), halves away from zero.
  // Exact while den < 2^63 / 1000, far beyond any sample count.
  const std::uint64_t whole = r.num / r.den;
  const std::uint64_t rem = r.num % r.den;
  const std::uint64_t tenths = whole * 1000 + (2000 * rem + r.den) / (2 * r.den);
  return std::to_string(tenths / 10) + "." + std::to_string(tenths % 10);
}

ReportColumn c45_reference_column() {
  ReportColumn col;
  col.name = "C4.5 (reported, not computed)";
  col.fixed = {"93.4", "-", "94.8", "99.2", "-", "99.4", "-"};
  return col;
}

namespace {

std::string cell(const ReportColumn& col, std::size_t row) {
  return col.report ? format_percent(col.report->cells[row]) : col.fixed[row];
}

}  // namespace

void write_report_text(std::ostream& out, std::span<const ReportColumn> columns) {
  std::size_t label_width = std::string_view("PERFORMANCE").size();
  for (std::size_t r = 0; r < kReportRows; ++r) {
    label_width = std::max(label_width, row_label(static_cast<ReportRow>(r)).size());
  }
  std::vector<std::size_t> widths;
  for (const auto& c : columns) {
    std::size_t w = c.name.size();
    for (std::size_t r = 0; r < kReportRows; ++r) w = std::max(w, cell(c, r).size());
    widths.push_back(w);
  }
  auto pad_right = [](std::string s, std::size_t w) {
    s.resize(std::max(w, s.size()), ' ');
    return s;
  };
  auto pad_left = [](const std::string& s, std::size_t w) {
    return std::string(w > s.size() ? w - s.size() : 0, ' ') + s;
  };
  out << pad_right("PERFORMANCE", label_width);
  for (std::size_t c = 0; c < columns.size(); ++c) out << "  " << pad_left(columns[c].name, widths[c]);
  out << '\n';
  for (std::size_t r = 0; r < kReportRows; ++r) {
    out << pad_right(std::string(row_label(static_cast<ReportRow>(r))), label_width);
    for (std::size_t c = 0; c < columns.size(); ++c) out << "  " << pad_left(cell(columns[c], r), widths[c]);
    out << '\n';
  }
}

namespace {

std::string csv_field(std::string_view v) {
  if (v.find_first_of(",\"\n") == std::string_view::npos) return std::string(v);
  std::string q = "\"";
  for (char ch : v) {
    if (ch == '"') q += '"';
    q += ch;
  }
  return q + '"';
}

std::vector<std::string> csv_fields(const std::string& line) {
  std::vector<std::string> out(1);
  bool quoted = false;
  for (std::size_t i = 0; i < line.size(); ++i) {
    const char ch = line[i];
    if (quoted) {
      if (ch == '"' && i + 1 < line.size() && line[i + 1] == '"') {
        out.back() += '"';
        ++i;
      } else if (ch == '"') {
        quoted = false;
      } else {
        out.back() += ch;
      }
    } else if (ch == '"') {
      quoted = true;
    } else if (ch == ',') {
      out.emplace_back();
    } else if (ch != '\r') {
      out.back() += ch;
    }
  }
  if (quoted) throw DataError("unterminated quote in report CSV");
  return out;
}

}  // namespace

void write_report_csv(std::ostream& out, std::span<const ReportColumn> columns) {
  out << "metric";
  for (const auto& c : columns) out << ',' << csv_field(c.name);
  out << '\n';
  for (std::size_t r = 0; r < kReportRows; ++r) {
    out << row_label(static_cast<ReportRow>(r));
    for (const auto& c : columns) out << ',' << cell(c, r);
    out << '\n';
  }
}

std::vector<std::pair<std::string, std::array<std::string, kReportRows>>> read_report_csv(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw DataError("empty report CSV");
  auto header = csv_fields(line);
  if (header.empty() || header[0] != "metric") throw DataError("report CSV must start with a 'metric' column");
  std::vector<std::pair<std::string, std::array<std::string, kReportRows>>> cols;
  for (std::size_t c = 1; c < header.size(); ++c) cols.push_back({header[c], {}});
  for (std::size_t r = 0; r < kReportRows; ++r) {
    if (!std::getline(in, line)) throw DataError("report CSV is missing rows");
    auto cells = csv_fields(line);
    if (cells.size() != header.size() || cells[0] != row_label(static_cast<ReportRow>(r))) {
      throw DataError("report CSV row " + std::to_string(r + 2) + " is malformed");
    }
    for (std::size_t c = 1; c < cells.size(); ++c) cols[c - 1].second[r] = cells[c];
  }
  return cols;
}

}  // namespace torclass::metrics
