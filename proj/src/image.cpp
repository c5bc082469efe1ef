#include <algorithm>
#include <cmath>

#include "amx/dataset.hpp"
#include "amx/error.hpp"
#include "amx/random.hpp"

namespace amx {

std::vector<float> rotate_image(std::span<const float> img, int64_t side,
                                double angle_deg) {
  if (side < 1 || static_cast<int64_t>(img.size()) != side * side)
    throw ValueError("rotate_image expects a square image, got " +
                     std::to_string(img.size()) + " pixels for side " +
                     std::to_string(side));
  if (angle_deg < 0.0 || angle_deg > 180.0)
    throw ValueError("rotation angle must lie in [0, 180], got " +
                     std::to_string(angle_deg));
  const double rad = angle_deg * M_PI / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  const double ctr = (static_cast<double>(side) - 1.0) / 2.0;
  std::vector<float> out(img.size(), 0.0f);
  for (int64_t y = 0; y < side; ++y) {
    const double dy = static_cast<double>(y) - ctr;
    for (int64_t x = 0; x < side; ++x) {
      const double dx = static_cast<double>(x) - ctr;
      // sample the source at the inverse-rotated coordinate
      const double sy = ctr + c * dy + s * dx;
      const double sx = ctr - s * dy + c * dx;
      const int64_t y0 = static_cast<int64_t>(std::floor(sy));
      const int64_t x0 = static_cast<int64_t>(std::floor(sx));
      const double fy = sy - static_cast<double>(y0);
      const double fx = sx - static_cast<double>(x0);
      double v = 0.0;
      auto tap = [&](int64_t yy, int64_t xx, double wgt) {
        if (yy >= 0 && yy < side && xx >= 0 && xx < side)
          v += wgt * static_cast<double>(img[static_cast<size_t>(yy * side + xx)]);
      };
      tap(y0, x0, (1.0 - fy) * (1.0 - fx));
      tap(y0, x0 + 1, (1.0 - fy) * fx);
      tap(y0 + 1, x0, fy * (1.0 - fx));
      tap(y0 + 1, x0 + 1, fy * fx);
      out[static_cast<size_t>(y * side + x)] = static_cast<float>(v);
    }
  }
  return out;
}

namespace {

// Additive anti-aliased capsule (thick segment) on a square canvas.
void draw_capsule(std::vector<float>& img, int64_t side, double y0, double x0,
                  double y1, double x1, double radius, double amp) {
  const double vy = y1 - y0, vx = x1 - x0;
  const double len2 = vy * vy + vx * vx;
  const int64_t lo_y = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(y0, y1) - radius - 1)));
  const int64_t hi_y = std::min<int64_t>(side - 1, static_cast<int64_t>(std::ceil(std::max(y0, y1) + radius + 1)));
  const int64_t lo_x = std::max<int64_t>(0, static_cast<int64_t>(std::floor(std::min(x0, x1) - radius - 1)));
  const int64_t hi_x = std::min<int64_t>(side - 1, static_cast<int64_t>(std::ceil(std::max(x0, x1) + radius + 1)));
  for (int64_t y = lo_y; y <= hi_y; ++y)
    for (int64_t x = lo_x; x <= hi_x; ++x) {
      double t = 0.0;
      if (len2 > 0.0)
        t = std::clamp(((y - y0) * vy + (x - x0) * vx) / len2, 0.0, 1.0);
      const double py = y0 + t * vy, px = x0 + t * vx;
      const double d = std::hypot(y - py, x - px);
      const double cov = std::clamp(radius + 0.5 - d, 0.0, 1.0);
      auto& px_ref = img[static_cast<size_t>(y * side + x)];
      px_ref = static_cast<float>(std::min(1.0, px_ref + amp * cov));
    }
}

}  // namespace

ImagePool make_glyph_pool(int64_t count, uint64_t seed, int64_t side) {
  ImagePool pool;
  pool.side = side;
  pool.count = count;
  pool.pixels.assign(static_cast<size_t>(count * side * side), 0.0f);
  const double ctr = (static_cast<double>(side) - 1.0) / 2.0;
  const double unit = static_cast<double>(side) / 28.0;  // proportions tuned at 28px
  for (int64_t i = 0; i < count; ++i) {
    auto rng = derive_rng(seed, static_cast<uint64_t>(i));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    auto jitter = [&](double scale) { return (u(rng) * 2.0 - 1.0) * scale * unit; };
    std::vector<float> img(static_cast<size_t>(side * side), 0.0f);

    const double top = ctr - (5.5 + 3.0 * u(rng)) * unit + jitter(0.8);
    const double bottom = ctr + (5.5 + 3.5 * u(rng)) * unit + jitter(0.8);
    const double radius = (0.7 + 1.4 * u(rng)) * unit;
    const double amp = 0.55 + 0.45 * u(rng);
    const int family = static_cast<int>(rng() % 4);
    switch (family) {
      case 0: {  // "1": near-vertical stroke with a short flag at the top
        const double xt = ctr + jitter(2.0), xb = ctr + jitter(2.0);
        draw_capsule(img, side, top, xt, bottom, xb, radius, amp);
        draw_capsule(img, side, top, xt, top + 3.5 * unit, xt - 4.0 * unit, radius * 0.9, amp);
        break;
      }
      case 1: {  // "7": top bar plus a diagonal descender
        const double xr = ctr + (3.0 + u(rng)) * unit;
        draw_capsule(img, side, top, ctr - 4.5 * unit + jitter(0.8), top, xr, radius, amp);
        draw_capsule(img, side, top, xr, bottom, ctr - 1.5 * unit + jitter(1.0), radius, amp);
        break;
      }
      case 2: {  // "T": top bar plus a center stroke
        draw_capsule(img, side, top, ctr - 4.5 * unit + jitter(0.8), top,
                     ctr + 4.5 * unit + jitter(0.8), radius, amp);
        draw_capsule(img, side, top, ctr + jitter(1.0), bottom, ctr + jitter(1.5), radius, amp);
        break;
      }
      default: {  // "P": vertical stroke plus a blob at the top-right
        const double xt = ctr - 1.5 * unit + jitter(1.0);
        draw_capsule(img, side, top, xt, bottom, xt + jitter(1.0), radius, amp);
        const double by = top + 2.0 * unit + jitter(0.7);
        const double bx = xt + 4.0 * unit + jitter(0.7);
        draw_capsule(img, side, by, bx, by, bx, (1.8 + 0.8 * u(rng)) * unit, amp);
        break;
      }
    }
    // interior dust keeps images within a family from being near-duplicates
    const int specks = 1 + static_cast<int>(rng() % 3);
    for (int k = 0; k < specks; ++k) {
      const double ang = u(rng) * 2.0 * M_PI;
      const double r = u(rng) * 6.5 * unit;
      const double cy = ctr + r * std::sin(ang), cx = ctr + r * std::cos(ang);
      draw_capsule(img, side, cy, cx, cy + jitter(1.2), cx + jitter(1.2),
                   (0.4 + 0.5 * u(rng)) * unit, 0.2 + 0.5 * u(rng));
    }
    // global gain decouples total ink mass from any mixing weight
    const float gain = static_cast<float>(0.45 + 0.55 * u(rng));
    for (auto& v : img) v *= gain;
    std::copy(img.begin(), img.end(),
              pool.pixels.begin() + static_cast<ptrdiff_t>(i * side * side));
  }
  return pool;
}

ImagePool pool_from_idx(const IdxImages& images) {
  if (images.rows != images.cols)
    throw ValueError("image pool requires square images, got " +
                     std::to_string(images.rows) + "x" + std::to_string(images.cols));
  ImagePool pool;
  pool.side = images.rows;
  pool.count = images.count;
  pool.pixels = images.pixels;
  return pool;
}

}  // namespace amx
