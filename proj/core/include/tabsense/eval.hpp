#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "tabsense/corpus.hpp"

namespace tabsense {

struct PredictionRecord {
  std::string table_id;
  int column_index = 0;
  TypeId gold = 0;
  TypeId predicted = 0;
};

struct TypeMetrics {
  TypeId type = 0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
  int64_t support = 0;  // gold count in the record set
};

struct MetricReport {
  std::vector<TypeMetrics> per_type;  // one row per vocabulary type, in TypeId order
  double macro_f1 = 0.0;              // mean over types with support > 0
  double weighted_f1 = 0.0;           // support-weighted mean
};

// Precision/recall/F1 per type with 0/0 defined as 0.
MetricReport f1_report(const std::vector<PredictionRecord>& records, size_t type_count);

struct TypeDelta {
  TypeId type = 0;
  double delta = 0.0;  // f1(b) - f1(a)
};

struct DeltaReport {
  std::vector<TypeDelta> deltas;  // sorted by descending delta, ties by type id
  int improved = 0;
  int equal = 0;
  int worsened = 0;
};

DeltaReport per_type_delta(const MetricReport& a, const MetricReport& b);

struct CiStat {
  double mean = 0.0;
  double half_width = 0.0;  // 1.96 * sample sd / sqrt(n)
};

CiStat mean_ci95(const std::vector<double>& values);

}  // namespace tabsense
