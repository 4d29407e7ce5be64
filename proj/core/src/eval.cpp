#include "tabsense/eval.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace tabsense {

MetricReport f1_report(const std::vector<PredictionRecord>& records, size_t type_count) {
  if (records.empty()) throw std::invalid_argument("f1_report: no records");

  std::vector<int64_t> tp(type_count, 0), fp(type_count, 0), fn(type_count, 0);
  for (const PredictionRecord& r : records) {
    if (r.gold < 0 || static_cast<size_t>(r.gold) >= type_count || r.predicted < 0 ||
        static_cast<size_t>(r.predicted) >= type_count)
      throw std::invalid_argument("f1_report: record type outside the vocabulary");
    if (r.gold == r.predicted) {
      ++tp[static_cast<size_t>(r.gold)];
    } else {
      ++fn[static_cast<size_t>(r.gold)];
      ++fp[static_cast<size_t>(r.predicted)];
    }
  }

  MetricReport report;
  report.per_type.resize(type_count);
  double macro_sum = 0.0, weighted_sum = 0.0;
  int64_t supported_types = 0, total_support = 0;

  for (size_t t = 0; t < type_count; ++t) {
    TypeMetrics& m = report.per_type[t];
    m.type = static_cast<TypeId>(t);
    m.support = tp[t] + fn[t];
    const double pred = static_cast<double>(tp[t] + fp[t]);
    const double gold = static_cast<double>(m.support);
    m.precision = pred > 0 ? static_cast<double>(tp[t]) / pred : 0.0;
    m.recall = gold > 0 ? static_cast<double>(tp[t]) / gold : 0.0;
    m.f1 = (m.precision + m.recall) > 0 ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
                                        : 0.0;
    if (m.support > 0) {
      ++supported_types;
      macro_sum += m.f1;
      weighted_sum += static_cast<double>(m.support) * m.f1;
      total_support += m.support;
    }
  }

  report.macro_f1 = supported_types > 0 ? macro_sum / static_cast<double>(supported_types) : 0.0;
  report.weighted_f1 = total_support > 0 ? weighted_sum / static_cast<double>(total_support) : 0.0;
  return report;
}

DeltaReport per_type_delta(const MetricReport& a, const MetricReport& b) {
  if (a.per_type.size() != b.per_type.size())
    throw std::invalid_argument("per_type_delta: reports cover different vocabularies");

  DeltaReport out;
  out.deltas.reserve(a.per_type.size());
  for (size_t t = 0; t < a.per_type.size(); ++t) {
    double d = b.per_type[t].f1 - a.per_type[t].f1;
    out.deltas.push_back({static_cast<TypeId>(t), d});
    if (d > 0)
      ++out.improved;
    else if (d < 0)
      ++out.worsened;
    else
      ++out.equal;
  }
  std::stable_sort(out.deltas.begin(), out.deltas.end(),
                   [](const TypeDelta& x, const TypeDelta& y) { return x.delta > y.delta; });
  return out;
}

CiStat mean_ci95(const std::vector<double>& values) {
  if (values.empty()) throw std::invalid_argument("mean_ci95: no values");
  CiStat s;
  for (double v : values) s.mean += v;
  s.mean /= static_cast<double>(values.size());
  if (values.size() < 2) return s;
  double var = 0.0;
  for (double v : values) var += (v - s.mean) * (v - s.mean);
  var /= static_cast<double>(values.size() - 1);  // sample variance
  s.half_width = 1.96 * std::sqrt(var / static_cast<double>(values.size()));
  return s;
}

}  // namespace tabsense
