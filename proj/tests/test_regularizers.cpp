#include <cmath>
#include <random>

#include "doctest.h"

#include "amx/regularizer.hpp"
#include "support/gradcheck.hpp"

using namespace amx;

namespace {

// plain scalar evaluation of the kernel and proportional distance, used as
// the independent oracle for every derived value below
double kernel_oracle(double yi, double yj, double beta) {
  return std::exp(-std::abs(yi - yj) / (beta * beta));
}

double distance_oracle(double yi, double yj, const std::vector<double>& zi,
                       const std::vector<double>& zj, double lambda) {
  double acc = 0.0;
  for (size_t m = 0; m < zi.size(); ++m)
    acc += (yi * zj[m] - yj * zi[m]) / (yj * zj[m]);
  return lambda / static_cast<double>(zi.size()) * acc;
}

MixupConfig anchored_cfg(double beta = 1.1, double lambda = 1e-4) {
  MixupConfig cfg;
  cfg.method = MixupMethod::anchored;
  cfg.beta = beta;
  cfg.lambda = lambda;
  return cfg;
}

}  // namespace

TEST_CASE("kernel weight values") {
  std::vector<double> yi = {3.0, -1.5, 7.25};
  auto w_same = kernel_weight<double>(yi, yi, 1.1);
  for (double w : w_same) CHECK(w == 1.0);  // zero distance -> exactly 1

  auto w1 = kernel_weight<double>(std::vector<double>{1.21}, std::vector<double>{0.0}, 1.1);
  CHECK(w1[0] == doctest::Approx(0.36787944117144233).epsilon(1e-12));

  auto w2 = kernel_weight<double>(std::vector<double>{10.0}, std::vector<double>{0.0}, 1.1);
  CHECK(w2[0] == doctest::Approx(0.0002575072172964977).epsilon(1e-12));
  CHECK(w2[0] < w1[0]);  // monotone decay in |dy|

  CHECK_THROWS_AS(kernel_weight<double>(yi, yi, 0.0), ValueError);
  CHECK_THROWS_AS(kernel_weight<double>(yi, yi, -1.0), ValueError);
}

TEST_CASE("kernel bounds and strict monotonicity") {
  // beta and |dy| kept inside the range where exp(-|dy|/beta^2) stays a
  // normal double; below that the weight underflows to an honest 0
  std::mt19937_64 rng(21);
  std::uniform_real_distribution<double> uy(-50.0, 50.0), ub(0.4, 20.0);
  for (int t = 0; t < 200; ++t) {
    const double beta = ub(rng);
    const double a = uy(rng), b = uy(rng), c = uy(rng);
    auto w = kernel_weight<double>(std::vector<double>{a, a}, std::vector<double>{b, c}, beta);
    CHECK(w[0] > 0.0);
    CHECK(w[0] <= 1.0);
    if (a == b) CHECK(w[0] == 1.0);
    const double d_ab = std::abs(a - b), d_ac = std::abs(a - c);
    if (std::abs(d_ab - d_ac) < 1e-6) continue;
    if (d_ab < d_ac)
      CHECK(w[0] > w[1]);
    else
      CHECK(w[0] < w[1]);
  }
}

TEST_CASE("proportional distance hand values") {
  auto zi = TensorD::from({1}, {3.0});
  auto zj = TensorD::from({1}, {2.0});
  CHECK(proportional_distance(2.0, 1.0, zi, zj, 1.0).item() ==
        doctest::Approx(0.5).epsilon(1e-12));
  CHECK(proportional_distance(2.0, 1.0, zi, zj, 1e-4).item() ==
        doctest::Approx(5e-5).epsilon(1e-12));
}

TEST_CASE("proportional distance vanishes exactly at proportionality") {
  // yi/yj = 2 exactly; z_i = 2*z_j in exact binary arithmetic
  auto zj = TensorD::from({3}, {0.5, 1.25, -2.0});
  auto zi = TensorD::from({3}, {1.0, 2.5, -4.0});
  CHECK(proportional_distance(2.0, 1.0, zi, zj, 1.0).item() == 0.0);
}

TEST_CASE("proportionality null holds at c=1 and breaks at c=1.5") {
  std::mt19937_64 rng(22);
  std::uniform_real_distribution<double> uz(0.2, 3.0), uy(0.5, 9.0);
  for (int t = 0; t < 50; ++t) {
    const double yi = uy(rng), yj = uy(rng);
    std::vector<double> zj(8), zi(8), zi_off(8);
    for (size_t m = 0; m < 8; ++m) {
      zj[m] = uz(rng);
      zi[m] = (yi / yj) * zj[m];
      zi_off[m] = 1.5 * zi[m];
    }
    const double d1 = proportional_distance(yi, yj, TensorD::from({8}, zi),
                                            TensorD::from({8}, zj), 1.0)
                          .item();
    const double d2 = proportional_distance(yi, yj, TensorD::from({8}, zi_off),
                                            TensorD::from({8}, zj), 1.0)
                          .item();
    CHECK(std::abs(d1) < 1e-9);
    CHECK(std::abs(d2) > 0.0);
  }
}

TEST_CASE("proportional distance is linear in lambda") {
  std::mt19937_64 rng(23);
  std::uniform_real_distribution<double> uz(0.3, 2.0), uy(0.5, 9.0);
  for (int t = 0; t < 50; ++t) {
    std::vector<double> zi(5), zj(5);
    for (size_t m = 0; m < 5; ++m) {
      zi[m] = uz(rng);
      zj[m] = uz(rng);
    }
    const double yi = uy(rng), yj = uy(rng);
    const double a = 0.37;
    const double da = proportional_distance(yi, yj, TensorD::from({5}, zi),
                                            TensorD::from({5}, zj), a)
                          .item();
    const double d2a = proportional_distance(yi, yj, TensorD::from({5}, zi),
                                             TensorD::from({5}, zj), 2.0 * a)
                           .item();
    CHECK(d2a == doctest::Approx(2.0 * da).epsilon(1e-12));
  }
}

TEST_CASE("proportional distance guard violations") {
  auto zi = TensorD::from({2}, {1.0, 2.0});
  CHECK_THROWS_AS(
      proportional_distance(1.0, 2.0, zi, TensorD::from({2}, {1.0, 0.0}), 1.0),
      GuardError);
  CHECK_THROWS_AS(
      proportional_distance(1.0, 0.0, zi, TensorD::from({2}, {1.0, 1.0}), 1.0),
      GuardError);
}

TEST_CASE("anchored penalty trivial cases") {
  std::vector<float> y = {2.0f, 3.0f, 4.0f};
  auto z = Tensor::from({3, 2}, {1, 2, 3, 4, 5, 6});
  auto same = anchored_mixup_penalty<float>(y, y, z, z, anchored_cfg());
  CHECK(same.penalty.item() == 0.0f);  // d_i = 0 on identical pairs
  CHECK(same.applied == 3);
  CHECK(same.skipped == 0);

  std::vector<float> y2 = {5.0f, 1.0f, 2.0f};
  auto z2 = Tensor::from({3, 2}, {2, 1, 4, 3, 6, 5});
  auto zero_lam = anchored_mixup_penalty<float>(y, y2, z, z2, anchored_cfg(1.1, 0.0));
  CHECK(zero_lam.penalty.item() == 0.0f);
  CHECK(zero_lam.applied + zero_lam.skipped == 3);
}

TEST_CASE("anchored penalty matches the scalar oracle pair by pair") {
  std::vector<double> yi = {2.0, 5.0};
  std::vector<double> yj = {1.5, 4.0};
  auto zi = TensorD::from({2, 3}, {0.8, 1.1, 2.0, 0.4, 0.9, 1.7});
  auto zj = TensorD::from({2, 3}, {1.0, 0.7, 1.9, 0.6, 1.2, 0.5});
  MixupConfig cfg = anchored_cfg(1.3, 0.01);
  auto res = anchored_mixup_penalty<double>(yi, yj, zi, zj, cfg);
  double expect = 0.0;
  for (int p = 0; p < 2; ++p) {
    std::vector<double> zi_p(zi.values().begin() + p * 3, zi.values().begin() + p * 3 + 3);
    std::vector<double> zj_p(zj.values().begin() + p * 3, zj.values().begin() + p * 3 + 3);
    expect += kernel_oracle(yi[p], yj[p], 1.3) *
              std::abs(distance_oracle(yi[p], yj[p], zi_p, zj_p, 0.01));
  }
  expect /= 2.0;
  CHECK(res.penalty.item() == doctest::Approx(expect).epsilon(1e-12));
  CHECK(res.applied == 2);
}

TEST_CASE("per-pair guard skips only the offending pairs") {
  std::vector<double> yi = {2.0, 3.0, 4.0};
  std::vector<double> yj = {1.0, 0.0, 2.0};  // pair 1 has y_j = 0
  auto zi = TensorD::from({3, 2}, {1.0, 2.0, 0.5, 0.7, 1.5, 2.5}, true);
  auto zj = TensorD::from({3, 2}, {2.0, 1.0, 0.9, 1.1, 0.0, 1.3}, true);  // pair 2 has a zero feature
  auto res = anchored_mixup_penalty<double>(yi, yj, zi, zj, anchored_cfg(1.1, 0.5));
  CHECK(res.applied == 1);
  CHECK(res.skipped == 2);

  std::vector<double> zi0 = {1.0, 2.0}, zj0 = {2.0, 1.0};
  const double expect =
      kernel_oracle(2.0, 1.0, 1.1) * std::abs(distance_oracle(2.0, 1.0, zi0, zj0, 0.5));
  CHECK(res.penalty.item() == doctest::Approx(expect).epsilon(1e-12));

  backward(res.penalty);
  for (double g : zi.grad()) CHECK(std::isfinite(g));
  for (double g : zj.grad()) CHECK(std::isfinite(g));
  // the guarded-out rows contribute exactly zero gradient
  CHECK(zi.grad()[2] == 0.0);
  CHECK(zi.grad()[3] == 0.0);
  CHECK(zj.grad()[4] == 0.0);
}

TEST_CASE("batch guard mode skips everything on one bad pair") {
  std::vector<double> yi = {2.0, 3.0};
  std::vector<double> yj = {1.0, 0.0};
  auto zi = TensorD::from({2, 2}, {1.0, 2.0, 0.5, 0.7});
  auto zj = TensorD::from({2, 2}, {2.0, 1.0, 0.9, 1.1});
  MixupConfig cfg = anchored_cfg();
  cfg.guard = GuardMode::batch;
  auto res = anchored_mixup_penalty<double>(yi, yj, zi, zj, cfg);
  CHECK(res.applied == 0);
  CHECK(res.skipped == 2);
  CHECK(res.penalty.item() == 0.0);
}

TEST_CASE("all-skipped batch yields zero penalty") {
  std::vector<double> yi = {2.0, 3.0};
  std::vector<double> yj = {0.0, 0.0};
  auto zi = TensorD::from({2, 2}, {1.0, 2.0, 0.5, 0.7});
  auto zj = TensorD::from({2, 2}, {2.0, 1.0, 0.9, 1.1});
  auto res = anchored_mixup_penalty<double>(yi, yj, zi, zj, anchored_cfg());
  CHECK(res.applied == 0);
  CHECK(res.skipped == 2);
  CHECK(res.penalty.item() == 0.0);
}

TEST_CASE("listing reduction equals the global-mean oracle") {
  std::vector<double> yi = {2.0, 5.0};
  std::vector<double> yj = {1.5, 4.0};
  auto zi = TensorD::from({2, 2}, {0.8, 1.1, 0.4, 0.9});
  auto zj = TensorD::from({2, 2}, {1.0, 0.7, 0.6, 1.2});
  MixupConfig cfg = anchored_cfg(1.1, 0.2);
  cfg.reduction = PenaltyReduction::listing;
  auto res = anchored_mixup_penalty<double>(yi, yj, zi, zj, cfg);

  double ratio_sum = 0.0;
  for (int p = 0; p < 2; ++p)
    for (int m = 0; m < 2; ++m) {
      const double zim = zi.values()[static_cast<size_t>(p * 2 + m)];
      const double zjm = zj.values()[static_cast<size_t>(p * 2 + m)];
      ratio_sum += (yi[p] * zjm - yj[p] * zim) / (yj[p] * zjm);
    }
  const double d = 0.2 * ratio_sum / 4.0;
  const double w_mean =
      0.5 * (kernel_oracle(yi[0], yj[0], 1.1) + kernel_oracle(yi[1], yj[1], 1.1));
  CHECK(res.penalty.item() == doctest::Approx(w_mean * std::abs(d)).epsilon(1e-12));
}

TEST_CASE("penalty is asymmetric under pair swap") {
  // pinned regression: Eq-style proportional distance is not symmetric in (i, j)
  std::vector<double> yi = {3.0};
  std::vector<double> yj = {1.5};
  auto zi = TensorD::from({1, 2}, {2.0, 0.9});
  auto zj = TensorD::from({1, 2}, {0.7, 1.4});
  MixupConfig cfg = anchored_cfg(1.1, 1.0);
  const double fwd = anchored_mixup_penalty<double>(yi, yj, zi, zj, cfg).penalty.item();
  const double rev = anchored_mixup_penalty<double>(yj, yi, zj, zi, cfg).penalty.item();
  const double fwd_oracle =
      kernel_oracle(3.0, 1.5, 1.1) *
      std::abs(distance_oracle(3.0, 1.5, {2.0, 0.9}, {0.7, 1.4}, 1.0));
  const double rev_oracle =
      kernel_oracle(1.5, 3.0, 1.1) *
      std::abs(distance_oracle(1.5, 3.0, {0.7, 1.4}, {2.0, 0.9}, 1.0));
  CHECK(fwd == doctest::Approx(fwd_oracle).epsilon(1e-12));
  CHECK(rev == doctest::Approx(rev_oracle).epsilon(1e-12));
  CHECK(fwd != rev);
}

TEST_CASE("penalty gradient matches finite differences away from d=0") {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> uz(0.3, 2.5), uy(1.0, 9.0);
  for (int t = 0; t < 10; ++t) {
    const int64_t batch = 3, n = 4;
    std::vector<double> yi(batch), yj(batch), ziv(batch * n), zjv(batch * n);
    for (auto& v : yi) v = uy(rng);
    for (auto& v : yj) v = uy(rng);
    for (auto& v : ziv) v = uz(rng);
    for (auto& v : zjv) v = uz(rng);
    auto zi = TensorD::from({batch, n}, ziv, true);
    auto zj = TensorD::from({batch, n}, zjv, true);
    MixupConfig cfg = anchored_cfg(1.7, 0.05);
    auto fn = [&] {
      return anchored_mixup_penalty<double>(yi, yj, zi, zj, cfg).penalty;
    };
    auto res = test::grad_check<double>(fn, {zi, zj}, 1e-4, 1e-9);
    CHECK(res.worst <= 1.0);
  }
}

TEST_CASE("input mixup with forced lambdas") {
  auto xi = Tensor::from({2, 2}, {1, 2, 3, 4});
  auto xj = Tensor::from({2, 2}, {5, 6, 7, 8});
  auto yi = Tensor::from({2, 1}, {10, 10});
  auto yj = Tensor::from({2, 1}, {20, 20});

  std::vector<float> ones = {1.0f, 1.0f};
  auto keep = mix_batches<float>(xi, yi, xj, yj, ones);
  CHECK(keep.x.values() == xi.values());
  CHECK(keep.y.values() == yi.values());

  std::vector<float> halves = {0.5f, 0.5f};
  auto mid = mix_batches<float>(xi, yi, xj, yj, halves);
  CHECK(mid.y.values() == std::vector<float>{15.0f, 15.0f});
  CHECK(mid.x.values() == std::vector<float>{3, 4, 5, 6});
}

TEST_CASE("input mixup sampling statistics") {
  std::mt19937_64 rng(41);
  double sum = 0.0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) sum += beta_sample(1.0, rng);
  CHECK(sum / n == doctest::Approx(0.5).epsilon(0.02));
  CHECK_THROWS_AS(beta_sample(0.0, rng), ValueError);
  CHECK_THROWS_AS(beta_sample(-1.0, rng), ValueError);
}

TEST_CASE("manifold mixup mixes hidden states differentiably") {
  auto zi = Tensor::from({2, 2}, {1, 2, 3, 4}, true);
  auto zj = Tensor::from({2, 2}, {5, 6, 7, 8}, true);
  auto yi = Tensor::from({2, 1}, {10, 10});
  auto yj = Tensor::from({2, 1}, {20, 20});

  std::vector<float> ones = {1.0f, 1.0f};
  auto keep = mix_hidden<float>(zi, yi, zj, yj, ones);
  CHECK(keep.z.values() == zi.values());

  std::vector<float> halves = {0.5f, 0.5f};
  auto mid = mix_hidden<float>(zi, yi, zj, yj, halves);
  CHECK(mid.z.values() == std::vector<float>{3, 4, 5, 6});
  CHECK(mid.y.values() == std::vector<float>{15.0f, 15.0f});

  backward(mean(mid.z));
  CHECK(zi.grad() == std::vector<float>(4, 0.125f));
  CHECK(zj.grad() == std::vector<float>(4, 0.125f));
}

TEST_CASE("norm penalties") {
  std::vector<Tensor> ridge_params = {Tensor::from({2}, {3.0f, 4.0f}, true)};
  CHECK(norm_penalty<float>(ridge_params, NormKind::ridge, 1.0f).item() == 25.0f);
  std::vector<Tensor> lasso_params = {Tensor::from({2}, {3.0f, -4.0f}, true)};
  CHECK(norm_penalty<float>(lasso_params, NormKind::lasso, 1.0f).item() == 7.0f);

  std::mt19937_64 rng(51);
  std::uniform_real_distribution<double> u(-2.0, 2.0);
  std::vector<TensorD> params;
  double ridge_oracle = 0.0, lasso_oracle = 0.0;
  for (int p = 0; p < 3; ++p) {
    std::vector<double> v(7);
    for (auto& x : v) {
      x = u(rng);
      ridge_oracle += x * x;
      lasso_oracle += std::abs(x);
    }
    params.push_back(TensorD::from({7}, v, true));
  }
  const double lam = 0.37;
  CHECK(norm_penalty<double>(params, NormKind::ridge, lam).item() ==
        doctest::Approx(lam * ridge_oracle).epsilon(1e-10));
  CHECK(norm_penalty<double>(params, NormKind::lasso, lam).item() ==
        doctest::Approx(lam * lasso_oracle).epsilon(1e-10));

  auto pen = norm_penalty<double>(params, NormKind::ridge, lam);
  backward(pen);
  for (size_t i = 0; i < params[0].values().size(); ++i)
    CHECK(params[0].grad()[i] ==
          doctest::Approx(2.0 * lam * params[0].values()[i]).epsilon(1e-12));

  CHECK_THROWS_AS(norm_penalty<double>(params, NormKind::ridge, -0.1), ValueError);
}

TEST_CASE("kernel monotone in beta on a frozen batch") {
  // shrinking beta never increases any pair's weight
  std::mt19937_64 rng(61);
  std::uniform_real_distribution<double> uy(-20.0, 20.0);
  std::vector<double> yi(16), yj(16);
  for (auto& v : yi) v = uy(rng);
  for (auto& v : yj) v = uy(rng);
  const double betas[] = {9.0, 3.0, 1.1, 0.5, 0.1};
  auto prev = kernel_weight<double>(yi, yj, betas[0]);
  for (size_t b = 1; b < 5; ++b) {
    auto w = kernel_weight<double>(yi, yj, betas[b]);
    for (size_t k = 0; k < w.size(); ++k) CHECK(w[k] <= prev[k]);
    prev = w;
  }
}

TEST_CASE("config validation") {
  MixupConfig cfg;
  cfg.beta = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg.beta = 1.0;
  cfg.lambda = -1e-9;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
  cfg.lambda = 0.0;
  cfg.alpha = 0.0;
  CHECK_THROWS_AS(cfg.validate(), ValueError);
}
