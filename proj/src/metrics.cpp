#include "latentcpt/metrics.hpp"

#include "latentcpt/error.hpp"

namespace latentcpt {

namespace {

std::optional<double> ratio(std::size_t num, std::size_t den) {
  if (den == 0) return std::nullopt;
  return static_cast<double>(num) / static_cast<double>(den);
}

}  // namespace

ConfusionMatrix confusion(std::span<const int> labels, std::span<const int> predictions) {
  if (labels.size() != predictions.size()) {
    throw Error(ErrorKind::LengthMismatch, "labels and predictions differ in length");
  }
  ConfusionMatrix cm;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int y = labels[i];
    const int p = predictions[i];
    if ((y != 0 && y != 1) || (p != 0 && p != 1)) {
      throw Error(ErrorKind::InvalidInput, "labels and predictions must be 0 or 1");
    }
    if (y == 1) {
      (p == 1 ? cm.tp : cm.fn)++;
    } else {
      (p == 1 ? cm.fp : cm.tn)++;
    }
  }
  return cm;
}

ClassificationMetrics metrics(const ConfusionMatrix& cm) {
  ClassificationMetrics m;
  m.accuracy = ratio(cm.tp + cm.tn, cm.total());
  const auto tpr = ratio(cm.tp, cm.tp + cm.fn);
  const auto tnr = ratio(cm.tn, cm.tn + cm.fp);
  if (tpr && tnr) m.balanced_accuracy = 0.5 * (*tpr + *tnr);
  m.precision = ratio(cm.tp, cm.tp + cm.fp);
  m.recall = tpr;
  if (m.precision && m.recall && *m.precision + *m.recall > 0.0) {
    m.f1 = 2.0 * *m.precision * *m.recall / (*m.precision + *m.recall);
  }
  return m;
}

double metric_value(const ClassificationMetrics& m, const std::string& name) {
  const std::optional<double>* slot = nullptr;
  if (name == "accuracy") slot = &m.accuracy;
  else if (name == "balanced_accuracy") slot = &m.balanced_accuracy;
  else if (name == "precision") slot = &m.precision;
  else if (name == "recall") slot = &m.recall;
  else if (name == "f1") slot = &m.f1;
  else throw Error(ErrorKind::InvalidInput, "unknown metric '" + name + "'");
  if (!slot->has_value()) {
    throw Error(ErrorKind::UndefinedMetric, name + " is undefined (zero denominator)");
  }
  return **slot;
}

}  // namespace latentcpt
