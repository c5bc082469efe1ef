#include "amx/plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include "amx/config.hpp"
#include "amx/error.hpp"

namespace amx {

CurveData curve_from_records(const std::vector<ExperimentRecord>& records) {
  if (records.empty()) throw ValueError("no records to plot");
  CurveData curve;
  for (const auto& b : records[0].bins) {
    curve.targets.push_back(b.target);
    curve.kept.push_back(b.kept ? 1 : 0);
  }
  if (curve.targets.empty()) throw ValueError("records carry no per-target bins");
  for (const auto& rec : records) {
    if (rec.bins.size() != curve.targets.size())
      throw ValueError("bin mismatch across records: " +
                       std::to_string(rec.bins.size()) + " bins vs " +
                       std::to_string(curve.targets.size()));
    CurveSeries s;
    s.label = rec.method;
    for (size_t i = 0; i < rec.bins.size(); ++i) {
      if (rec.bins[i].target != curve.targets[i])
        throw ValueError("bin mismatch across records at target " +
                         std::to_string(rec.bins[i].target));
      s.mae.push_back(rec.bins[i].mae);
    }
    curve.series.push_back(std::move(s));
  }
  return curve;
}

std::vector<std::pair<float, float>> kept_bands(const CurveData& curve) {
  std::vector<std::pair<float, float>> bands;
  for (size_t i = 0; i < curve.targets.size();) {
    if (!curve.kept[i]) {
      ++i;
      continue;
    }
    size_t j = i;
    while (j + 1 < curve.targets.size() && curve.kept[j + 1]) ++j;
    bands.emplace_back(curve.targets[i], curve.targets[j]);
    i = j + 1;
  }
  return bands;
}

void write_curve_csv(const std::string& path, const CurveData& curve) {
  std::ofstream os(path, std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << "target,kept";
  for (const auto& s : curve.series) os << ",mae_" << s.label;
  os << "\n";
  for (size_t i = 0; i < curve.targets.size(); ++i) {
    os << format_f64(curve.targets[i]) << "," << (curve.kept[i] ? 1 : 0);
    for (const auto& s : curve.series) os << "," << format_f64(s.mae[i]);
    os << "\n";
  }
}

// ---------------------------------------------------------------------------
// BMP rendering
// ---------------------------------------------------------------------------

namespace {

struct Rgb {
  uint8_t r, g, b;
};

struct Canvas {
  int w, h;
  std::vector<uint8_t> px;  // RGB rows, top-down
  Canvas(int w_, int h_) : w(w_), h(h_), px(static_cast<size_t>(w_ * h_ * 3), 255) {}
  void set(int x, int y, Rgb c) {
    if (x < 0 || x >= w || y < 0 || y >= h) return;
    const size_t i = 3 * (static_cast<size_t>(y) * w + x);
    px[i] = c.r;
    px[i + 1] = c.g;
    px[i + 2] = c.b;
  }
  void fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::max(0, y0); y <= std::min(h - 1, y1); ++y)
      for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x) set(x, y, c);
  }
  void line(int x0, int y0, int x1, int y1, Rgb c) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    for (;;) {
      set(x0, y0, c);
      if (x0 == x1 && y0 == y1) break;
      const int e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
};

// 5x7 font, bit 4 = leftmost column
const uint8_t* glyph_rows(char c) {
  static const uint8_t digits[10][7] = {
      {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}, {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E},
      {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}, {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E},
      {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}, {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E},
      {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08},
      {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}, {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}};
  static const uint8_t letters[26][7] = {
      {0x0E, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11}, {0x1E, 0x11, 0x11, 0x1E, 0x11, 0x11, 0x1E},
      {0x0E, 0x11, 0x10, 0x10, 0x10, 0x11, 0x0E}, {0x1C, 0x12, 0x11, 0x11, 0x11, 0x12, 0x1C},
      {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x1F}, {0x1F, 0x10, 0x10, 0x1E, 0x10, 0x10, 0x10},
      {0x0E, 0x11, 0x10, 0x17, 0x11, 0x11, 0x0F}, {0x11, 0x11, 0x11, 0x1F, 0x11, 0x11, 0x11},
      {0x0E, 0x04, 0x04, 0x04, 0x04, 0x04, 0x0E}, {0x07, 0x02, 0x02, 0x02, 0x02, 0x12, 0x0C},
      {0x11, 0x12, 0x14, 0x18, 0x14, 0x12, 0x11}, {0x10, 0x10, 0x10, 0x10, 0x10, 0x10, 0x1F},
      {0x11, 0x1B, 0x15, 0x15, 0x11, 0x11, 0x11}, {0x11, 0x11, 0x19, 0x15, 0x13, 0x11, 0x11},
      {0x0E, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x1E, 0x11, 0x11, 0x1E, 0x10, 0x10, 0x10},
      {0x0E, 0x11, 0x11, 0x11, 0x15, 0x12, 0x0D}, {0x1E, 0x11, 0x11, 0x1E, 0x14, 0x12, 0x11},
      {0x0F, 0x10, 0x10, 0x0E, 0x01, 0x01, 0x1E}, {0x1F, 0x04, 0x04, 0x04, 0x04, 0x04, 0x04},
      {0x11, 0x11, 0x11, 0x11, 0x11, 0x11, 0x0E}, {0x11, 0x11, 0x11, 0x11, 0x11, 0x0A, 0x04},
      {0x11, 0x11, 0x11, 0x15, 0x15, 0x15, 0x0A}, {0x11, 0x11, 0x0A, 0x04, 0x0A, 0x11, 0x11},
      {0x11, 0x11, 0x11, 0x0A, 0x04, 0x04, 0x04}, {0x1F, 0x01, 0x02, 0x04, 0x08, 0x10, 0x1F}};
  static const uint8_t dot[7] = {0, 0, 0, 0, 0, 0x0C, 0x0C};
  static const uint8_t minus[7] = {0, 0, 0, 0x1F, 0, 0, 0};
  static const uint8_t plus[7] = {0, 0x04, 0x04, 0x1F, 0x04, 0x04, 0};
  static const uint8_t space[7] = {0, 0, 0, 0, 0, 0, 0};
  static const uint8_t underscore[7] = {0, 0, 0, 0, 0, 0, 0x1F};
  if (c >= '0' && c <= '9') return digits[c - '0'];
  if (c >= 'A' && c <= 'Z') return letters[c - 'A'];
  if (c >= 'a' && c <= 'z') return letters[c - 'a'];
  switch (c) {
    case '.': return dot;
    case '-': return minus;
    case '+': return plus;
    case '_': return underscore;
    default: return space;
  }
}

void draw_text(Canvas& cv, int x, int y, const std::string& text, Rgb c) {
  for (char ch : text) {
    const uint8_t* rows = glyph_rows(ch);
    for (int ry = 0; ry < 7; ++ry)
      for (int rx = 0; rx < 5; ++rx)
        if (rows[ry] & (1 << (4 - rx))) cv.set(x + rx, y + ry, c);
    x += 6;
  }
}

std::string tick_label(double v) {
  char buf[32];
  if (v != 0.0 && (std::abs(v) < 1e-2 || std::abs(v) >= 1e4))
    std::snprintf(buf, sizeof(buf), "%.0e", v);
  else
    std::snprintf(buf, sizeof(buf), "%.4g", v);
  return buf;
}

void write_bmp(const std::string& path, const Canvas& cv) {
  const int row_bytes = (cv.w * 3 + 3) & ~3;
  const uint32_t pixel_bytes = static_cast<uint32_t>(row_bytes * cv.h);
  const uint32_t file_size = 54 + pixel_bytes;
  std::vector<uint8_t> out;
  out.reserve(file_size);
  auto put16 = [&](uint16_t v) {
    out.push_back(static_cast<uint8_t>(v & 0xff));
    out.push_back(static_cast<uint8_t>(v >> 8));
  };
  auto put32 = [&](uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<uint8_t>((v >> (8 * i)) & 0xff));
  };
  put16(0x4D42);  // "BM"
  put32(file_size);
  put32(0);
  put32(54);
  put32(40);  // BITMAPINFOHEADER
  put32(static_cast<uint32_t>(cv.w));
  put32(static_cast<uint32_t>(cv.h));
  put16(1);
  put16(24);
  put32(0);
  put32(pixel_bytes);
  put32(2835);
  put32(2835);
  put32(0);
  put32(0);
  for (int y = cv.h - 1; y >= 0; --y) {  // bottom-up rows, BGR
    for (int x = 0; x < cv.w; ++x) {
      const size_t i = 3 * (static_cast<size_t>(y) * cv.w + x);
      out.push_back(cv.px[i + 2]);
      out.push_back(cv.px[i + 1]);
      out.push_back(cv.px[i]);
    }
    for (int p = cv.w * 3; p < row_bytes; ++p) out.push_back(0);
  }
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os.write(reinterpret_cast<const char*>(out.data()),
           static_cast<std::streamsize>(out.size()));
  if (!os) throw IoError("short write to " + path);
}

const Rgb kPalette[] = {{200, 40, 40}, {40, 90, 200}, {30, 140, 60}, {150, 60, 170},
                        {210, 130, 20}, {20, 150, 150}};

}  // namespace

void render_curve_bmp(const std::string& path, const CurveData& curve, int width,
                      int height) {
  const int ml = 64, mr = 16, mt = 16, mb = 44;
  Canvas cv(width, height);
  const double x_min = curve.targets.front(), x_max = curve.targets.back();
  double y_max = 1e-9;
  for (const auto& s : curve.series)
    for (double v : s.mae) y_max = std::max(y_max, v);
  y_max *= 1.05;
  auto px = [&](double t) {
    return ml + static_cast<int>(std::lround((t - x_min) / (x_max - x_min) *
                                             (width - ml - mr - 1)));
  };
  auto py = [&](double v) {
    return height - mb -
           static_cast<int>(std::lround(v / y_max * (height - mt - mb - 1)));
  };

  // shaded bands over the in-distribution (kept) target regions
  for (const auto& [a, b] : kept_bands(curve))
    cv.fill_rect(px(a), mt, px(b), height - mb, {225, 225, 225});

  // axes + ticks
  const Rgb black{0, 0, 0};
  cv.line(ml, mt, ml, height - mb, black);
  cv.line(ml, height - mb, width - mr, height - mb, black);
  for (int k = 0; k <= 5; ++k) {
    const double tx = x_min + (x_max - x_min) * k / 5.0;
    const int x = px(tx);
    cv.line(x, height - mb, x, height - mb + 4, black);
    draw_text(cv, x - 10, height - mb + 8, tick_label(tx), black);
    const double ty = y_max * k / 5.0;
    const int y = py(ty);
    cv.line(ml - 4, y, ml, y, black);
    draw_text(cv, 4, y - 3, tick_label(ty), black);
  }
  draw_text(cv, width / 2 - 20, height - 14, "TARGET", black);
  draw_text(cv, 4, 4, "MAE", black);

  // series polylines + legend
  int ly = mt + 6;
  for (size_t s = 0; s < curve.series.size(); ++s) {
    const Rgb c = kPalette[s % (sizeof(kPalette) / sizeof(kPalette[0]))];
    for (size_t i = 0; i + 1 < curve.targets.size(); ++i)
      cv.line(px(curve.targets[i]), py(curve.series[s].mae[i]),
              px(curve.targets[i + 1]), py(curve.series[s].mae[i + 1]), c);
    cv.fill_rect(width - mr - 130, ly, width - mr - 118, ly + 6, c);
    draw_text(cv, width - mr - 112, ly, curve.series[s].label, black);
    ly += 12;
  }
  write_bmp(path, cv);
}

}  // namespace amx
