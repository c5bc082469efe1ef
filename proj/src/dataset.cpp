#include <algorithm>
#include <cmath>
#include <numeric>

#include "amx/container.hpp"
#include "amx/dataset.hpp"
#include "amx/error.hpp"

namespace amx {

Dataset build_rotation_dataset(const ImagePool& base, int64_t angle_count,
                               int64_t per_angle, std::mt19937_64& rng) {
  if (angle_count < 2) throw ValueError("angle_count must be >= 2");
  if (per_angle < 1) throw ValueError("per_angle must be >= 1");
  if (base.count < per_angle)
    throw ValueError("insufficient base images: need " + std::to_string(per_angle) +
                     " per angle, pool holds " + std::to_string(base.count));

  Dataset out;
  out.input_shape = {1, base.side, base.side};
  out.inputs.reserve(static_cast<size_t>(angle_count * per_angle * base.side * base.side));
  out.targets.reserve(static_cast<size_t>(angle_count * per_angle));

  std::vector<int64_t> pick(static_cast<size_t>(base.count));
  std::iota(pick.begin(), pick.end(), 0);
  for (int64_t a = 0; a < angle_count; ++a) {
    const float angle = static_cast<float>(
        180.0 * static_cast<double>(a) / static_cast<double>(angle_count - 1));
    // draw per_angle distinct pool indices for this target
    for (int64_t k = 0; k < per_angle; ++k) {
      std::uniform_int_distribution<int64_t> pickd(k, base.count - 1);
      std::swap(pick[static_cast<size_t>(k)], pick[static_cast<size_t>(pickd(rng))]);
      auto rotated = rotate_image(base.image(pick[static_cast<size_t>(k)]), base.side,
                                  static_cast<double>(angle));
      out.push(rotated, angle);
    }
  }

  // shuffle sample order
  const int64_t n = out.size();
  const int64_t per = out.sample_numel();
  for (int64_t i = n - 1; i > 0; --i) {
    std::uniform_int_distribution<int64_t> d(0, i);
    const int64_t j = d(rng);
    if (i == j) continue;
    std::swap(out.targets[static_cast<size_t>(i)], out.targets[static_cast<size_t>(j)]);
    std::swap_ranges(out.inputs.begin() + static_cast<ptrdiff_t>(i * per),
                     out.inputs.begin() + static_cast<ptrdiff_t>((i + 1) * per),
                     out.inputs.begin() + static_cast<ptrdiff_t>(j * per));
  }
  return out;
}

SliceResult apply_slice_removal(const Dataset& data, const SplitSpec& spec) {
  if (spec.slice_width < 1 || spec.keep_width < 1)
    throw ValueError("slice and keep widths must be >= 1");
  std::vector<float> uniq(data.targets);
  std::sort(uniq.begin(), uniq.end());
  uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
  const int64_t n_uniq = static_cast<int64_t>(uniq.size());
  if (spec.keep_width + spec.slice_width > n_uniq)
    throw ValueError("slice spec widths (" + std::to_string(spec.keep_width) + "+" +
                     std::to_string(spec.slice_width) + ") exceed the " +
                     std::to_string(n_uniq) + " unique targets");

  SliceResult res;
  const int64_t period = spec.keep_width + spec.slice_width;
  std::vector<char> kept(uniq.size());
  for (int64_t i = 0; i < n_uniq; ++i) {
    kept[static_cast<size_t>(i)] = (i % period) < spec.keep_width;
    (kept[static_cast<size_t>(i)] ? res.kept_targets : res.removed_targets)
        .push_back(uniq[static_cast<size_t>(i)]);
  }

  res.train.input_shape = data.input_shape;
  res.removed.input_shape = data.input_shape;
  for (int64_t i = 0; i < data.size(); ++i) {
    const float t = data.targets[static_cast<size_t>(i)];
    const auto it = std::lower_bound(uniq.begin(), uniq.end(), t);
    const bool keep = kept[static_cast<size_t>(it - uniq.begin())];
    (keep ? res.train : res.removed).push(data.input_at(i), t);
  }
  return res;
}

Dataset synth_smooth_regression(SynthFn fn, int64_t n_points, double noise_sd,
                                std::mt19937_64& rng) {
  if (n_points < 2) throw ValueError("synthetic dataset needs at least 2 points");
  Dataset out;
  out.input_shape = {1};
  out.inputs.reserve(static_cast<size_t>(n_points));
  out.targets.reserve(static_cast<size_t>(n_points));
  std::uniform_real_distribution<double> ux(0.0, 1.0);
  std::normal_distribution<double> noise(0.0, noise_sd > 0.0 ? noise_sd : 1.0);
  for (int64_t i = 0; i < n_points; ++i) {
    const double x = ux(rng);
    double y = fn == SynthFn::sine ? std::sin(2.0 * M_PI * x) : x * x * x;
    if (noise_sd > 0.0) y += noise(rng);
    const float xf = static_cast<float>(x);
    out.push(std::span<const float>(&xf, 1), static_cast<float>(y));
  }
  return out;
}

void write_dataset_cache(const std::string& path, const Dataset& data) {
  Shape full = data.input_shape;
  full.insert(full.begin(), data.size());
  std::vector<TensorBlob> blobs(2);
  blobs[0].shape = full;
  blobs[0].data = data.inputs;
  blobs[1].shape = {data.size()};
  blobs[1].data = data.targets;
  write_container(path, "dataset", blobs);
}

Dataset read_dataset_cache(const std::string& path) {
  Container c = read_container(path);
  if (c.spec != "dataset" || c.tensors.size() != 2 || c.tensors[0].shape.empty())
    throw IoError("file " + path + " is not a dataset cache");
  Dataset out;
  out.input_shape.assign(c.tensors[0].shape.begin() + 1, c.tensors[0].shape.end());
  out.inputs = std::move(c.tensors[0].data);
  out.targets = std::move(c.tensors[1].data);
  if (static_cast<int64_t>(out.targets.size()) != c.tensors[0].shape[0])
    throw IoError("dataset cache " + path + " has inconsistent sample counts");
  return out;
}

PairLoader::PairLoader(const Dataset& data, int64_t batch_size, uint64_t seed,
                       float target_shift)
    : data_(&data), batch_size_(batch_size), shift_(target_shift), rng_(seed) {
  if (batch_size < 1 || batch_size > data.size())
    throw ValueError("batch size " + std::to_string(batch_size) +
                     " out of range for dataset of " + std::to_string(data.size()));
  perm_i_.resize(static_cast<size_t>(data.size()));
  perm_j_.resize(static_cast<size_t>(data.size()));
  std::iota(perm_i_.begin(), perm_i_.end(), 0);
  std::iota(perm_j_.begin(), perm_j_.end(), 0);
}

void PairLoader::next_epoch() {
  std::shuffle(perm_i_.begin(), perm_i_.end(), rng_);
  std::shuffle(perm_j_.begin(), perm_j_.end(), rng_);
}

PairBatch PairLoader::make_batch(int64_t k) const {
  if (k < 0 || k >= batches_per_epoch())
    throw ValueError("batch index " + std::to_string(k) + " out of range");
  const int64_t per = data_->sample_numel();
  Shape xshape = data_->input_shape;
  xshape.insert(xshape.begin(), batch_size_);

  auto gather = [&](const std::vector<int64_t>& perm, Tensor& x, Tensor& y) {
    std::vector<float> xv(static_cast<size_t>(batch_size_ * per));
    std::vector<float> yv(static_cast<size_t>(batch_size_));
    for (int64_t b = 0; b < batch_size_; ++b) {
      const int64_t idx = perm[static_cast<size_t>(k * batch_size_ + b)];
      const auto src = data_->input_at(idx);
      std::copy(src.begin(), src.end(), xv.begin() + static_cast<ptrdiff_t>(b * per));
      yv[static_cast<size_t>(b)] = data_->targets[static_cast<size_t>(idx)] + shift_;
    }
    x = Tensor::from(xshape, std::move(xv));
    y = Tensor::from({batch_size_, 1}, std::move(yv));
  };

  PairBatch pb;
  gather(perm_i_, pb.xi, pb.yi);
  gather(perm_j_, pb.xj, pb.yj);
  return pb;
}

}  // namespace amx
