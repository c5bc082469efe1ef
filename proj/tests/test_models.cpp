#include <cstdio>
#include <random>

#include "doctest.h"

#include "amx/model.hpp"

using namespace amx;

TEST_CASE("small cnn shape contract") {
  std::mt19937_64 rng(1);
  auto m = build_small_cnn<float>({28, 28}, {8, 16}, 16, rng);
  std::vector<float> xv(4 * 28 * 28);
  std::mt19937_64 xr(2);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (auto& v : xv) v = d(xr);
  auto x = Tensor::from({4, 1, 28, 28}, xv);
  auto z = m.extract(x);
  CHECK(z.shape() == Shape{4, 16});
  auto y = m.predict_from_z(z);
  CHECK(y.shape() == Shape{4, 1});
}

TEST_CASE("zero head predicts its bias") {
  std::mt19937_64 rng(3);
  auto m = build_small_cnn<float>({28, 28}, {4, 8}, 8, rng);
  auto& hw = m.params[static_cast<size_t>(m.head_w)].values_mut();
  std::fill(hw.begin(), hw.end(), 0.0f);
  m.params[static_cast<size_t>(m.head_b)].values_mut()[0] = 4.25f;
  std::vector<float> xv(2 * 28 * 28, 0.37f);
  auto y = m.forward(Tensor::from({2, 1, 28, 28}, xv));
  CHECK(y.values()[0] == 4.25f);
  CHECK(y.values()[1] == 4.25f);
}

TEST_CASE("single-linear extractor equals the closed-form affine map") {
  std::mt19937_64 rng(4);
  auto m = build_mlp<float>(1, {}, 1, rng);
  // yhat = w2*(w1*x + b1) + b2
  m.params[0].values_mut() = {1.5f};   // w1
  m.params[1].values_mut() = {0.25f};  // b1
  m.params[2].values_mut() = {-2.0f};  // w2 (head)
  m.params[3].values_mut() = {3.0f};   // b2
  auto y = m.forward(Tensor::from({3, 1}, {0.0f, 1.0f, -2.0f}));
  for (int i = 0; i < 3; ++i) {
    const float x = std::vector<float>{0.0f, 1.0f, -2.0f}[static_cast<size_t>(i)];
    const float expect = -2.0f * (1.5f * x + 0.25f) + 3.0f;
    CHECK(y.values()[static_cast<size_t>(i)] == doctest::Approx(expect));
  }
}

TEST_CASE("mlp shapes and identity layer") {
  std::mt19937_64 rng(5);
  auto m = build_mlp<float>(1, {16}, 8, rng);
  auto z = m.extract(Tensor::from({6, 1}, std::vector<float>(6, 0.5f)));
  CHECK(z.shape() == Shape{6, 8});
  CHECK(m.forward(Tensor::from({6, 1}, std::vector<float>(6, 0.5f))).shape() ==
        Shape{6, 1});

  auto ident = build_mlp<float>(3, {}, 3, rng);
  auto& w = ident.params[0].values_mut();
  std::fill(w.begin(), w.end(), 0.0f);
  for (int i = 0; i < 3; ++i) w[static_cast<size_t>(i * 3 + i)] = 1.0f;
  auto x = Tensor::from({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(ident.extract(x).values() == x.values());
}

TEST_CASE("random mlp matches a naive feedforward oracle") {
  std::mt19937_64 rng(6);
  auto m = build_mlp<double>(3, {4}, 2, rng);
  std::vector<double> x = {0.3, -1.2, 0.8};
  auto z = m.extract(TensorD::from({1, 3}, x));
  auto yhat = m.predict_from_z(z);

  // independent plain-loop oracle over the same parameters
  auto linear = [](const std::vector<double>& in, const TensorD& W, const TensorD& b) {
    const int64_t ni = W.shape()[0], no = W.shape()[1];
    std::vector<double> out(static_cast<size_t>(no), 0.0);
    for (int64_t o = 0; o < no; ++o) {
      for (int64_t i = 0; i < ni; ++i)
        out[static_cast<size_t>(o)] +=
            in[static_cast<size_t>(i)] * W.values()[static_cast<size_t>(i * no + o)];
      out[static_cast<size_t>(o)] += b.values()[static_cast<size_t>(o)];
    }
    return out;
  };
  auto h = linear(x, m.params[0], m.params[1]);
  for (auto& v : h) v = std::max(0.0, v);
  auto zo = linear(h, m.params[2], m.params[3]);
  auto yo = linear(zo, m.params[4], m.params[5]);
  for (size_t i = 0; i < zo.size(); ++i)
    CHECK(z.values()[i] == doctest::Approx(zo[i]).epsilon(1e-6));
  CHECK(yhat.values()[0] == doctest::Approx(yo[0]).epsilon(1e-6));
}

TEST_CASE("split consistency is bitwise") {
  std::mt19937_64 rng(7);
  auto m = build_small_cnn<float>({16, 16}, {4, 8}, 8, rng);
  std::vector<float> xv(3 * 16 * 16);
  std::mt19937_64 xr(8);
  std::uniform_real_distribution<float> d(0.0f, 1.0f);
  for (auto& v : xv) v = d(xr);
  auto x = Tensor::from({3, 1, 16, 16}, xv);
  auto fused = m.forward(x);
  auto split = m.predict_from_z(m.extract(x));
  CHECK(fused.values() == split.values());
}

TEST_CASE("parameter count is a pure function of the architecture") {
  std::mt19937_64 rng(9);
  CHECK(build_small_cnn<float>({28, 28}, {8, 16}, 16, rng).param_count() == 1265);
  CHECK(build_small_cnn<float>({28, 28}, {8, 16, 32}, 32, rng).param_count() == 5921);
  // projection kicks in when z differs from the last channel width
  CHECK(build_small_cnn<float>({28, 28}, {8, 16}, 8, rng).param_count() ==
        1248 + 136 + 9);
  CHECK(build_mlp<float>(1, {16}, 8, rng).param_count() == 177);
}

TEST_CASE("model build errors") {
  std::mt19937_64 rng(10);
  CHECK_THROWS_AS(build_small_cnn<float>({28, 27}, {8}, 8, rng), ValueError);
  CHECK_THROWS_AS(build_small_cnn<float>({28, 28}, {8}, 0, rng), ValueError);
  // 3x3 -> 1x1 after one stride-2 block; the second conv would hit zero size
  CHECK_THROWS_AS(build_small_cnn<float>({3, 3}, {4, 4}, 4, rng), ShapeError);
  auto m = build_mlp<float>(2, {}, 2, rng);
  CHECK_THROWS_AS(m.forward(Tensor::from({1, 3}, {1, 2, 3})), ShapeError);
}

TEST_CASE("checkpoint round trip is bitwise") {
  std::mt19937_64 rng(11);
  auto m = build_small_cnn<float>({16, 16}, {4, 8}, 8, rng);
  const std::string path = "ckpt_test.amx";
  save_checkpoint(path, m);
  auto loaded = load_checkpoint<float>(path);
  CHECK(loaded.arch == m.arch);
  REQUIRE(loaded.params.size() == m.params.size());
  for (size_t i = 0; i < m.params.size(); ++i) {
    CHECK(loaded.params[i].shape() == m.params[i].shape());
    CHECK(loaded.params[i].values() == m.params[i].values());
  }
  std::remove(path.c_str());
}

TEST_CASE("checkpoint rejects corrupt files") {
  const std::string path = "ckpt_bad.amx";
  {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    std::fputs("not a checkpoint", f);
    std::fclose(f);
  }
  CHECK_THROWS_AS(load_checkpoint<float>(path), IoError);
  std::remove(path.c_str());
}
