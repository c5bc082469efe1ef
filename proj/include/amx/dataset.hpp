#pragma once

// Data ingestion and OOD-split construction: IDX parsing, continuous-angle
// rotation targets, sequential slice-removal splits, synthetic sources, and
// the dual-stream pair loader feeding the anchored penalty.

#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "amx/tensor.hpp"

namespace amx {

struct Dataset {
  Shape input_shape;           // per-sample shape, e.g. {1,28,28} or {1}
  std::vector<float> inputs;   // size() * numel(input_shape), row-major
  std::vector<float> targets;  // size()

  int64_t size() const { return static_cast<int64_t>(targets.size()); }
  int64_t sample_numel() const { return numel(input_shape); }
  std::span<const float> input_at(int64_t i) const {
    const int64_t n = sample_numel();
    return {inputs.data() + i * n, static_cast<size_t>(n)};
  }
  void push(std::span<const float> input, float target) {
    inputs.insert(inputs.end(), input.begin(), input.end());
    targets.push_back(target);
  }
};

// ---------------------------------------------------------------------------
// IDX (MNIST container format)
// ---------------------------------------------------------------------------

inline constexpr uint32_t kIdxImagesMagic = 0x00000803;
inline constexpr uint32_t kIdxLabelsMagic = 0x00000801;

struct IdxHeader {
  uint32_t magic = 0;
  std::vector<int64_t> dims;
};

struct IdxImages {
  int64_t count = 0, rows = 0, cols = 0;
  std::vector<float> pixels;  // scaled to [0,1]
};

struct IdxLabels {
  std::vector<uint8_t> labels;
};

/// Reads magic + dims without requiring the payload (file metadata probes).
IdxHeader peek_idx_header(std::span<const uint8_t> bytes);

IdxImages parse_idx_images(std::span<const uint8_t> bytes);
IdxLabels parse_idx_labels(std::span<const uint8_t> bytes);

IdxImages load_idx_images(const std::string& path);

// ---------------------------------------------------------------------------
// Images
// ---------------------------------------------------------------------------

/// Rotates a square image about its center by `angle_deg` in [0, 180] with
/// bilinear interpolation; samples falling outside the frame read as zero.
std::vector<float> rotate_image(std::span<const float> img, int64_t side,
                                double angle_deg);

/// A pool of equally sized grayscale base images.
struct ImagePool {
  int64_t side = 0;
  int64_t count = 0;
  std::vector<float> pixels;
  std::span<const float> image(int64_t i) const {
    const int64_t n = side * side;
    return {pixels.data() + i * n, static_cast<size_t>(n)};
  }
};

/// Synthetic oriented glyphs: stroke compositions sharing an upright
/// canonical pose (families loosely shaped like 1/7/T/P), so the rotation
/// angle of a rotated glyph is recoverable from a single image. Images are
/// generated from per-index RNG streams derived from (seed, index).
ImagePool make_glyph_pool(int64_t count, uint64_t seed, int64_t side = 28);

ImagePool pool_from_idx(const IdxImages& images);

// ---------------------------------------------------------------------------
// Dataset builders
// ---------------------------------------------------------------------------

/// Rotation-to-angle regression set: `angle_count` equally spaced targets
/// spanning [0, 180] inclusive, `per_angle` images per target drawn from the
/// pool without replacement within each target. The result is shuffled.
Dataset build_rotation_dataset(const ImagePool& base, int64_t angle_count,
                               int64_t per_angle, std::mt19937_64& rng);

struct SplitSpec {
  int64_t slice_width = 1;  // consecutive unique targets removed per period
  int64_t keep_width = 1;   // consecutive unique targets retained per period
};

struct SliceResult {
  Dataset train;
  Dataset removed;
  std::vector<float> kept_targets;     // sorted unique
  std::vector<float> removed_targets;  // sorted unique
};

/// Sequential slice removal over the sorted unique targets, starting with a
/// kept run: keep_width kept, slice_width removed, repeating.
SliceResult apply_slice_removal(const Dataset& data, const SplitSpec& spec);

enum class SynthFn { sine, cubic };

/// 1-D smoke-test surrogate: x ~ U[0,1], y = f(x) + N(0, noise_sd) with
/// f = sin(2 pi x) or x^3.
Dataset synth_smooth_regression(SynthFn fn, int64_t n_points, double noise_sd,
                                std::mt19937_64& rng);

// ---------------------------------------------------------------------------
// Dataset cache
// ---------------------------------------------------------------------------

void write_dataset_cache(const std::string& path, const Dataset& data);
Dataset read_dataset_cache(const std::string& path);

// ---------------------------------------------------------------------------
// Pair loader
// ---------------------------------------------------------------------------

struct PairBatch {
  Tensor xi, yi, xj, yj;  // leaves; x: [b, ...], y: [b, 1] (shifted targets)
};

/// Two independent shuffles of the same dataset zipped positionally. Every
/// epoch reshuffles both streams; the last partial batch is dropped. An
/// optional target shift is baked into the emitted y tensors (and must be
/// subtracted again when mapping predictions back to raw units).
class PairLoader {
 public:
  PairLoader(const Dataset& data, int64_t batch_size, uint64_t seed,
             float target_shift = 0.0f);

  int64_t batches_per_epoch() const { return data_->size() / batch_size_; }
  void next_epoch();
  PairBatch make_batch(int64_t k) const;

  const std::vector<int64_t>& perm_i() const { return perm_i_; }
  const std::vector<int64_t>& perm_j() const { return perm_j_; }
  float target_shift() const { return shift_; }

 private:
  const Dataset* data_;
  int64_t batch_size_;
  float shift_;
  std::mt19937_64 rng_;
  std::vector<int64_t> perm_i_, perm_j_;
};

}  // namespace amx
