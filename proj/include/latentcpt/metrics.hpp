#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>

namespace latentcpt {

struct ConfusionMatrix {
  std::size_t tn = 0;
  std::size_t fp = 0;
  std::size_t fn = 0;
  std::size_t tp = 0;

  std::size_t total() const { return tn + fp + fn + tp; }
  bool operator==(const ConfusionMatrix&) const = default;
};

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions);

// An empty optional marks a metric whose denominator is zero.
struct ClassificationMetrics {
  std::optional<double> accuracy;
  std::optional<double> balanced_accuracy;
  std::optional<double> precision;
  std::optional<double> recall;
  std::optional<double> f1;
};

ClassificationMetrics metrics(const ConfusionMatrix& cm);

/// Named lookup ("accuracy", "balanced_accuracy", "precision", "recall",
/// "f1"). Throws UndefinedMetric for an undefined value.
double metric_value(const ClassificationMetrics& m, const std::string& name);

}  // namespace latentcpt
