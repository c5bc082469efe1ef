#pragma once

// Regression networks factored as feature extractor h(x) -> z plus a single
// linear head f(z) -> yhat, so the hidden state z is always addressable.

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "amx/container.hpp"
#include "amx/error.hpp"
#include "amx/tensor.hpp"

namespace amx {

template <typename T>
struct SplitModelT {
  struct Layer {
    enum class Kind { conv, linear, relu, pool1x1, flatten, offset };
    Kind kind;
    int w = -1;  // index into params
    int b = -1;
    int64_t stride = 1;
    int64_t pad = 0;
    double value = 0.0;  // constant for offset stages
  };

  std::string arch;   // rebuildable description, e.g. "cnn;in=1x28x28;ch=8,16;z=16"
  Shape input_shape;  // per-sample shape: {C,H,W} for cnn, {D} for mlp
  int64_t z_dim = 0;
  std::vector<TensorT<T>> params;  // flat list of trainable leaves
  std::vector<Layer> extractor;
  int head_w = -1;
  int head_b = -1;

  /// Feature extractor h(x): batched input -> z of shape [batch, z_dim].
  TensorT<T> extract(const TensorT<T>& x) const {
    check_batched_input(x);
    TensorT<T> cur = x;
    const int64_t batch = x.shape()[0];
    for (const Layer& l : extractor) {
      switch (l.kind) {
        case Layer::Kind::conv:
          cur = conv2d(cur, params[static_cast<size_t>(l.w)],
                       params[static_cast<size_t>(l.b)], l.stride, l.pad);
          break;
        case Layer::Kind::linear:
          cur = add(matmul(cur, params[static_cast<size_t>(l.w)]),
                    params[static_cast<size_t>(l.b)]);
          break;
        case Layer::Kind::relu:
          cur = relu(cur);
          break;
        case Layer::Kind::pool1x1:
          cur = adaptive_avg_pool1x1(cur);
          break;
        case Layer::Kind::flatten:
          cur = reshape(cur, {batch, cur.size() / batch});
          break;
        case Layer::Kind::offset:
          cur = add(cur, static_cast<T>(l.value));
          break;
      }
    }
    return cur;
  }

  /// Linear head f(z): [batch, z_dim] -> [batch, 1].
  TensorT<T> predict_from_z(const TensorT<T>& z) const {
    if (z.rank() != 2 || z.shape()[1] != z_dim)
      throw ShapeError("head expects z of shape [batch, " + std::to_string(z_dim) +
                       "], got " + shape_str(z.shape()));
    return add(matmul(z, params[static_cast<size_t>(head_w)]),
               params[static_cast<size_t>(head_b)]);
  }

  TensorT<T> forward(const TensorT<T>& x) const { return predict_from_z(extract(x)); }

  int64_t param_count() const {
    int64_t n = 0;
    for (const auto& p : params) n += p.size();
    return n;
  }

  std::vector<std::vector<T>> param_values() const {
    std::vector<std::vector<T>> out;
    out.reserve(params.size());
    for (const auto& p : params) out.push_back(p.values());
    return out;
  }

  void set_param_values(const std::vector<std::vector<T>>& vals) {
    if (vals.size() != params.size())
      throw ValueError("parameter snapshot count mismatch");
    for (size_t i = 0; i < params.size(); ++i) {
      if (vals[i].size() != params[i].values().size())
        throw ShapeError("parameter snapshot shape mismatch at index " +
                         std::to_string(i));
      params[i].values_mut() = vals[i];
    }
  }

  void check_batched_input(const TensorT<T>& x) const {
    bool ok = x.rank() == static_cast<int>(input_shape.size()) + 1;
    if (ok)
      for (size_t i = 0; i < input_shape.size(); ++i)
        ok = ok && x.shape()[i + 1] == input_shape[i];
    if (!ok)
      throw ShapeError("model expects batched input [n, " + shape_str(input_shape) +
                       "], got " + shape_str(x.shape()));
  }
};

using SplitModel = SplitModelT<float>;

/// Additive constant applied to the CNN's pooled features. Pooled relu maps
/// at desk scale carry exact-zero coordinates (dead channels) that would trip
/// the proportional-distance guard on nearly every pair.
inline constexpr double kFeatureFloor = 0.05;

namespace detail {

template <typename T>
TensorT<T> kaiming_uniform(Shape shape, int64_t fan_in, std::mt19937_64& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<T> data(static_cast<size_t>(numel(shape)));
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return TensorT<T>::from(std::move(shape), std::move(data), /*requires_grad=*/true);
}

inline std::string join_i64(const std::vector<int64_t>& v, char sep) {
  std::ostringstream os;
  for (size_t i = 0; i < v.size(); ++i) os << (i ? std::string(1, sep) : "") << v[i];
  return os.str();
}

inline std::vector<int64_t> split_i64(const std::string& s, char sep) {
  std::vector<int64_t> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep))
    if (!cur.empty()) out.push_back(std::stoll(cur));
  return out;
}

}  // namespace detail

/// Small plain CNN: [conv 3x3 -> relu] per channel entry (stride 2, except
/// the final block at stride 1 so the pool averages a wider map), adaptive
/// average pool to 1x1, flatten, optional linear projection to z_dim, linear
/// head to a scalar. Weights are Kaiming-uniform (fan-in), biases zero.
template <typename T>
SplitModelT<T> build_small_cnn(const Shape& image_shape, const std::vector<int64_t>& channels,
                               int64_t z_dim, std::mt19937_64& rng) {
  Shape in_shape = image_shape;
  if (in_shape.size() == 2) in_shape.insert(in_shape.begin(), 1);
  if (in_shape.size() != 3 || in_shape[0] != 1)
    throw ValueError("build_small_cnn expects a grayscale image shape, got " +
                     shape_str(image_shape));
  if (in_shape[1] != in_shape[2])
    throw ValueError("build_small_cnn expects a square image, got " +
                     shape_str(image_shape));
  if (z_dim < 1) throw ValueError("z_dim must be >= 1");
  if (channels.empty()) throw ValueError("at least one conv block is required");

  constexpr int64_t kKernel = 3, kPad = 0;
  SplitModelT<T> m;
  m.input_shape = in_shape;
  m.z_dim = z_dim;

  int64_t spatial = in_shape[1];
  int64_t cin = 1;
  for (size_t i = 0; i < channels.size(); ++i) {
    const int64_t cout = channels[i];
    const int64_t stride = (i + 1 < channels.size()) ? 2 : 1;
    const int64_t out = conv_out_dim(spatial, kKernel, stride, kPad);
    if (out < 1)
      throw ShapeError("conv block " + std::to_string(i) +
                       " reduces spatial dims below 1 (input " +
                       std::to_string(spatial) + "x" + std::to_string(spatial) + ")");
    m.params.push_back(detail::kaiming_uniform<T>({cout, cin, kKernel, kKernel},
                                                  cin * kKernel * kKernel, rng));
    m.params.push_back(TensorT<T>::zeros({cout}, /*requires_grad=*/true));
    typename SplitModelT<T>::Layer conv{SplitModelT<T>::Layer::Kind::conv,
                                        static_cast<int>(m.params.size()) - 2,
                                        static_cast<int>(m.params.size()) - 1,
                                        stride, kPad};
    m.extractor.push_back(conv);
    m.extractor.push_back({SplitModelT<T>::Layer::Kind::relu});
    spatial = out;
    cin = cout;
  }
  m.extractor.push_back({SplitModelT<T>::Layer::Kind::pool1x1});
  m.extractor.push_back({SplitModelT<T>::Layer::Kind::flatten});
  if (cin != z_dim) {
    m.params.push_back(detail::kaiming_uniform<T>({cin, z_dim}, cin, rng));
    m.params.push_back(TensorT<T>::zeros({z_dim}, /*requires_grad=*/true));
    m.extractor.push_back({SplitModelT<T>::Layer::Kind::linear,
                           static_cast<int>(m.params.size()) - 2,
                           static_cast<int>(m.params.size()) - 1});
  }
  // constant feature floor: keeps every z coordinate strictly positive, so
  // the proportional-distance denominators stay clear of zero
  typename SplitModelT<T>::Layer floor_stage{SplitModelT<T>::Layer::Kind::offset,
                                             -1, -1, 1, 0};
  floor_stage.value = kFeatureFloor;
  m.extractor.push_back(floor_stage);

  m.params.push_back(detail::kaiming_uniform<T>({z_dim, 1}, z_dim, rng));
  m.params.push_back(TensorT<T>::zeros({1}, /*requires_grad=*/true));
  m.head_w = static_cast<int>(m.params.size()) - 2;
  m.head_b = static_cast<int>(m.params.size()) - 1;

  std::ostringstream arch;
  arch << "cnn;in=1x" << in_shape[1] << "x" << in_shape[2] << ";ch="
       << detail::join_i64(channels, ',') << ";z=" << z_dim;
  m.arch = arch.str();
  return m;
}

/// MLP extractor: [linear -> relu] per hidden width, then a linear map to
/// z_dim (no activation on z), plus the scalar linear head.
template <typename T>
SplitModelT<T> build_mlp(int64_t input_dim, const std::vector<int64_t>& hidden,
                         int64_t z_dim, std::mt19937_64& rng) {
  if (input_dim < 1 || z_dim < 1)
    throw ValueError("build_mlp requires input_dim >= 1 and z_dim >= 1");
  SplitModelT<T> m;
  m.input_shape = {input_dim};
  m.z_dim = z_dim;

  int64_t cur = input_dim;
  auto push_linear = [&](int64_t in, int64_t out) {
    m.params.push_back(detail::kaiming_uniform<T>({in, out}, in, rng));
    m.params.push_back(TensorT<T>::zeros({out}, /*requires_grad=*/true));
    m.extractor.push_back({SplitModelT<T>::Layer::Kind::linear,
                           static_cast<int>(m.params.size()) - 2,
                           static_cast<int>(m.params.size()) - 1});
  };
  for (int64_t h : hidden) {
    push_linear(cur, h);
    m.extractor.push_back({SplitModelT<T>::Layer::Kind::relu});
    cur = h;
  }
  push_linear(cur, z_dim);

  m.params.push_back(detail::kaiming_uniform<T>({z_dim, 1}, z_dim, rng));
  m.params.push_back(TensorT<T>::zeros({1}, /*requires_grad=*/true));
  m.head_w = static_cast<int>(m.params.size()) - 2;
  m.head_b = static_cast<int>(m.params.size()) - 1;

  std::ostringstream arch;
  arch << "mlp;in=" << input_dim << ";hidden=" << detail::join_i64(hidden, ',')
       << ";z=" << z_dim;
  m.arch = arch.str();
  return m;
}

/// Rebuilds a model from its arch string with freshly initialized parameters.
template <typename T>
SplitModelT<T> build_from_arch(const std::string& arch, std::mt19937_64& rng) {
  std::string kind;
  std::vector<int64_t> in_dims, widths;
  int64_t z = -1;
  std::istringstream is(arch);
  std::string field;
  while (std::getline(is, field, ';')) {
    auto eq = field.find('=');
    if (eq == std::string::npos) {
      kind = field;
      continue;
    }
    const std::string key = field.substr(0, eq), val = field.substr(eq + 1);
    if (key == "in") in_dims = detail::split_i64(val, 'x');
    else if (key == "ch" || key == "hidden") widths = detail::split_i64(val, ',');
    else if (key == "z") z = std::stoll(val);
  }
  if (kind == "cnn" && in_dims.size() == 3 && z > 0)
    return build_small_cnn<T>(Shape(in_dims.begin(), in_dims.end()), widths, z, rng);
  if (kind == "mlp" && in_dims.size() == 1 && z > 0)
    return build_mlp<T>(in_dims[0], widths, z, rng);
  throw ValueError("unrecognized model arch string: " + arch);
}

template <typename T>
void save_checkpoint(const std::string& path, const SplitModelT<T>& model) {
  std::vector<TensorBlob> blobs;
  blobs.reserve(model.params.size());
  for (const auto& p : model.params) {
    TensorBlob b;
    b.shape = p.shape();
    b.data.assign(p.values().begin(), p.values().end());
    blobs.push_back(std::move(b));
  }
  write_container(path, model.arch, blobs);
}

template <typename T>
SplitModelT<T> load_checkpoint(const std::string& path) {
  Container c = read_container(path);
  std::mt19937_64 rng(0);  // structure only; every value is overwritten below
  SplitModelT<T> m = build_from_arch<T>(c.spec, rng);
  if (c.tensors.size() != m.params.size())
    throw IoError("checkpoint " + path + " holds " + std::to_string(c.tensors.size()) +
                  " tensors, model needs " + std::to_string(m.params.size()));
  for (size_t i = 0; i < m.params.size(); ++i) {
    if (c.tensors[i].shape != m.params[i].shape())
      throw IoError("checkpoint tensor " + std::to_string(i) + " shape " +
                    shape_str(c.tensors[i].shape) + " does not match model shape " +
                    shape_str(m.params[i].shape()));
    auto& dst = m.params[i].values_mut();
    for (size_t j = 0; j < dst.size(); ++j)
      dst[j] = static_cast<T>(c.tensors[i].data[j]);
  }
  return m;
}

}  // namespace amx
