#include "maskface/metrics.hpp"

#include <fstream>
#include <iomanip>
#include <sstream>

#include "maskface/errors.hpp"

namespace maskface {

std::int64_t MetricsReport::total() const {
  std::int64_t n = 0;
  for (const auto& row : confusion) {
    for (auto v : row) n += v;
  }
  return n;
}

MetricsReport metrics_from_confusion(const ConfusionMatrix& confusion) {
  const std::size_t k = confusion.size();
  for (std::size_t r = 0; r < k; ++r) {
    if (confusion[r].size() != k) {
      throw DimensionError("confusion matrix row " + std::to_string(r) + " has " +
                           std::to_string(confusion[r].size()) + " columns, expected " + std::to_string(k));
    }
    for (auto v : confusion[r]) {
      if (v < 0) throw ParameterError("confusion matrix entries must be non-negative");
    }
  }

  MetricsReport m;
  m.confusion = confusion;
  m.precision.assign(k, 0.0);
  m.recall.assign(k, 0.0);
  m.f1.assign(k, 0.0);
  std::vector<std::int64_t> row_sum(k, 0), col_sum(k, 0);
  std::int64_t diagonal = 0;
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < k; ++c) {
      row_sum[r] += confusion[r][c];
      col_sum[c] += confusion[r][c];
    }
    diagonal += confusion[r][r];
  }
  const std::int64_t total = m.total();
  m.accuracy = total > 0 ? static_cast<double>(diagonal) / static_cast<double>(total) : 0.0;

  std::size_t present = 0;
  for (std::size_t c = 0; c < k; ++c) {
    const double tp = static_cast<double>(confusion[c][c]);
    m.precision[c] = col_sum[c] > 0 ? tp / static_cast<double>(col_sum[c]) : 0.0;
    m.recall[c] = row_sum[c] > 0 ? tp / static_cast<double>(row_sum[c]) : 0.0;
    const double pr = m.precision[c] + m.recall[c];
    m.f1[c] = pr > 0.0 ? 2.0 * m.precision[c] * m.recall[c] / pr : 0.0;
    if (row_sum[c] > 0) {
      ++present;
      m.macro_precision += m.precision[c];
      m.macro_recall += m.recall[c];
      m.macro_f1 += m.f1[c];
    }
  }
  if (present > 0) {
    m.macro_precision /= static_cast<double>(present);
    m.macro_recall /= static_cast<double>(present);
    m.macro_f1 /= static_cast<double>(present);
  }
  return m;
}

int argmax(std::span<const float> values) {
  if (values.empty()) throw ContractError("argmax of an empty span");
  int best = 0;
  for (std::size_t i = 1; i < values.size(); ++i) {
    if (values[i] > values[static_cast<std::size_t>(best)]) best = static_cast<int>(i);
  }
  return best;
}

std::string format_metrics(const MetricsReport& report, std::span<const std::string> class_names) {
  std::ostringstream out;
  out << std::setprecision(6);
  const std::size_t k = report.confusion.size();
  out << "samples=" << report.total() << '\n';
  out << "classes=" << k << '\n';
  out << "accuracy=" << report.accuracy << '\n';
  out << "macro_precision=" << report.macro_precision << '\n';
  out << "macro_recall=" << report.macro_recall << '\n';
  out << "macro_f1=" << report.macro_f1 << '\n';
  for (std::size_t c = 0; c < k; ++c) {
    std::int64_t support = 0;
    for (auto v : report.confusion[c]) support += v;
    const std::string key = "class." + std::to_string(c);
    if (c < class_names.size()) out << key << ".name=" << class_names[c] << '\n';
    out << key << ".precision=" << report.precision[c] << '\n';
    out << key << ".recall=" << report.recall[c] << '\n';
    out << key << ".f1=" << report.f1[c] << '\n';
    out << key << ".support=" << support << '\n';
  }
  for (std::size_t r = 0; r < k; ++r) {
    out << "confusion." << r << '=';
    for (std::size_t c = 0; c < k; ++c) out << (c ? " " : "") << report.confusion[r][c];
    out << '\n';
  }
  return out.str();
}

void write_metrics(const std::filesystem::path& path, const MetricsReport& report,
                   std::span<const std::string> class_names) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << format_metrics(report, class_names);
  if (!out) throw IoError("write failed: " + path.string());
}

}  // namespace maskface
