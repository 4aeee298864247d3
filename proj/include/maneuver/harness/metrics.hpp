#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>

#include <json.hpp>

#include "maneuver/core/error.hpp"
#include "maneuver/ingest/types.hpp"

namespace maneuver {

/// 3x3 confusion counts, rows = predicted class, columns = true class, both
/// in NLC, LLC, RLC order. Row sums are therefore prediction counts and
/// column sums are per-class sample counts.
struct ConfusionMatrix {
  std::array<std::array<int64_t, kNumClasses>, kNumClasses> counts{};

  void add(int output, int target, int64_t n = 1) {
    require(output >= 0 && output < kNumClasses, "confusion output class out of range");
    require(target >= 0 && target < kNumClasses, "confusion target class out of range");
    require(n >= 0, "confusion count must be non-negative");
    counts[static_cast<size_t>(output)][static_cast<size_t>(target)] += n;
  }

  int64_t total() const {
    int64_t t = 0;
    for (const auto& row : counts)
      for (int64_t v : row) t += v;
    return t;
  }

  int64_t trace() const {
    int64_t t = 0;
    for (int i = 0; i < kNumClasses; ++i) t += counts[static_cast<size_t>(i)][static_cast<size_t>(i)];
    return t;
  }

  int64_t row_sum(int i) const {
    int64_t t = 0;
    for (int64_t v : counts[static_cast<size_t>(i)]) t += v;
    return t;
  }

  int64_t col_sum(int j) const {
    int64_t t = 0;
    for (int i = 0; i < kNumClasses; ++i) t += counts[static_cast<size_t>(i)][static_cast<size_t>(j)];
    return t;
  }

  ConfusionMatrix& operator+=(const ConfusionMatrix& other) {
    for (int i = 0; i < kNumClasses; ++i)
      for (int j = 0; j < kNumClasses; ++j)
        counts[static_cast<size_t>(i)][static_cast<size_t>(j)] +=
            other.counts[static_cast<size_t>(i)][static_cast<size_t>(j)];
    return *this;
  }
};

/// Derived metrics, all in percent. A precision is undefined when its class
/// was never predicted (zero row); a recall is undefined when the class has
/// no samples (zero column). Undefined stays empty instead of masquerading
/// as 0.
struct EvalReport {
  ConfusionMatrix matrix;
  std::array<std::optional<double>, kNumClasses> precision;
  std::array<std::optional<double>, kNumClasses> recall;
  double accuracy = 0.0;
  nlohmann::json config_echo = nlohmann::json::object();
};

inline EvalReport confusion_metrics(const ConfusionMatrix& m) {
  if (m.total() <= 0) validation_error("confusion matrix is empty");
  EvalReport r;
  r.matrix = m;
  r.accuracy = 100.0 * static_cast<double>(m.trace()) / static_cast<double>(m.total());
  for (int i = 0; i < kNumClasses; ++i) {
    const int64_t row = m.row_sum(i);
    const int64_t col = m.col_sum(i);
    const double diag = static_cast<double>(m.counts[static_cast<size_t>(i)][static_cast<size_t>(i)]);
    if (row > 0) r.precision[static_cast<size_t>(i)] = 100.0 * diag / static_cast<double>(row);
    if (col > 0) r.recall[static_cast<size_t>(i)] = 100.0 * diag / static_cast<double>(col);
  }
  return r;
}

/// One decimal place; undefined metrics render as "n/a".
inline std::string format_percent(const std::optional<double>& v) {
  if (!v) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", *v);
  return buf;
}

/// Confusion matrix plus margins as a fixed-width text block:
/// predicted classes down the side, true classes across, precision as the
/// last column and recall as the last row.
inline std::string render_report(const EvalReport& r) {
  auto cell = [](const std::string& s) {
    std::string out = s;
    while (out.size() < 9) out.insert(out.begin(), ' ');
    return out;
  };
  std::string out;
  out += "          " + cell("NLC") + cell("LLC") + cell("RLC") + "  " + cell("precision") + "\n";
  for (int i = 0; i < kNumClasses; ++i) {
    out += "  " + std::string(to_string(static_cast<ClassLabel>(i))) + "     ";
    for (int j = 0; j < kNumClasses; ++j)
      out += cell(std::to_string(r.matrix.counts[static_cast<size_t>(i)][static_cast<size_t>(j)]));
    out += "  " + cell(format_percent(r.precision[static_cast<size_t>(i)])) + "\n";
  }
  out += "  recall  ";
  for (int j = 0; j < kNumClasses; ++j) out += cell(format_percent(r.recall[static_cast<size_t>(j)]));
  out += "\n";
  char acc[96];
  std::snprintf(acc, sizeof(acc), "  accuracy %.1f%%  (%lld of %lld correct)\n", r.accuracy,
                static_cast<long long>(r.matrix.trace()), static_cast<long long>(r.matrix.total()));
  out += acc;
  return out;
}

inline nlohmann::json report_to_json(const EvalReport& r) {
  nlohmann::json j;
  j["accuracy"] = r.accuracy;
  for (int i = 0; i < kNumClasses; ++i) {
    const std::string name = to_string(static_cast<ClassLabel>(i));
    j["precision"][name] = r.precision[static_cast<size_t>(i)]
                               ? nlohmann::json(*r.precision[static_cast<size_t>(i)])
                               : nlohmann::json();
    j["recall"][name] = r.recall[static_cast<size_t>(i)] ? nlohmann::json(*r.recall[static_cast<size_t>(i)])
                                                         : nlohmann::json();
    nlohmann::json row = nlohmann::json::array();
    for (int k = 0; k < kNumClasses; ++k) row.push_back(r.matrix.counts[static_cast<size_t>(i)][static_cast<size_t>(k)]);
    j["matrix"].push_back(row);
  }
  j["total"] = r.matrix.total();
  j["config"] = r.config_echo;
  return j;
}

/// Rebuilds a report from its serialized form. Only the matrix and config
/// echo are trusted; the derived metrics are recomputed, so a hand-edited
/// accuracy field cannot disagree with its own counts.
inline EvalReport eval_report_from_json(const nlohmann::json& j, const std::string& what) {
  ConfusionMatrix m;
  try {
    const auto& rows = j.at("matrix");
    if (!rows.is_array() || rows.size() != kNumClasses) {
      format_error(what + ": matrix must have " + std::to_string(kNumClasses) + " rows");
    }
    for (int i = 0; i < kNumClasses; ++i) {
      const auto& row = rows[static_cast<size_t>(i)];
      if (!row.is_array() || row.size() != kNumClasses) {
        format_error(what + ": matrix row " + std::to_string(i) + " must have " +
                     std::to_string(kNumClasses) + " entries");
      }
      for (int k = 0; k < kNumClasses; ++k) m.add(i, k, row[static_cast<size_t>(k)].get<int64_t>());
    }
  } catch (const nlohmann::json::exception& e) {
    format_error(what + ": " + e.what());
  }
  EvalReport r = confusion_metrics(m);
  r.config_echo = j.value("config", nlohmann::json::object());
  return r;
}

}  // namespace maneuver
