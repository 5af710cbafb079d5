#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace maskface {

/// Rows are true classes, columns predicted classes.
using ConfusionMatrix = std::vector<std::vector<std::int64_t>>;

struct MetricsReport {
  ConfusionMatrix confusion;
  double accuracy = 0.0;
  std::vector<double> precision;
  std::vector<double> recall;
  std::vector<double> f1;
  /// Unweighted means over classes that occur in the data (row sum > 0).
  double macro_precision = 0.0;
  double macro_recall = 0.0;
  double macro_f1 = 0.0;

  std::int64_t total() const;
};

MetricsReport metrics_from_confusion(const ConfusionMatrix& confusion);

/// Index of the largest value; ties go to the lowest index.
int argmax(std::span<const float> values);

/// Key/value text document, one `key=value` per line:
///   samples, classes, accuracy, macro_precision, macro_recall, macro_f1,
///   class.<i>.name / .precision / .recall / .f1 / .support,
///   confusion.<i> = space-separated row i.
std::string format_metrics(const MetricsReport& report, std::span<const std::string> class_names = {});
void write_metrics(const std::filesystem::path& path, const MetricsReport& report,
                   std::span<const std::string> class_names = {});

}  // namespace maskface
