#pragma once

// Test-error-vs-target curve artifacts: CSV of binned MAE per method plus a
// rendered line chart (24-bit BMP) with the in-distribution target regions
// shaded.

#include <string>
#include <vector>

#include "amx/trainer.hpp"

namespace amx {

struct CurveSeries {
  std::string label;
  std::vector<double> mae;  // one value per bin
};

struct CurveData {
  std::vector<float> targets;  // sorted bin centers
  std::vector<char> kept;      // per bin: in-distribution flag
  std::vector<CurveSeries> series;
};

/// Collates record bins into one curve table; throws on bin mismatch.
CurveData curve_from_records(const std::vector<ExperimentRecord>& records);

/// Contiguous kept-target runs as [first, last] target pairs.
std::vector<std::pair<float, float>> kept_bands(const CurveData& curve);

/// Columns: target, kept, then one MAE column per series.
void write_curve_csv(const std::string& path, const CurveData& curve);

void render_curve_bmp(const std::string& path, const CurveData& curve,
                      int width = 960, int height = 560);

}  // namespace amx
