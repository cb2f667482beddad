#include <algorithm>
#include <numeric>
#include <random>

#include "doctest.h"
#include "pregate/evaluation.hpp"
#include "pregate/kernels.hpp"

using namespace pregate;
namespace k = pregate::kernels;

namespace {

struct Problem {
  std::vector<double> x;
  std::vector<int> y;
  std::vector<double> w;
  std::size_t rows, cols;
  k::MatrixView view() const { return {x, rows, cols}; }
};

Problem make_problem(std::size_t rows, std::size_t cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> nd;
  Problem p{{}, {}, {}, rows, cols};
  p.x.resize(rows * cols);
  for (auto& v : p.x) v = std::round(nd(rng) * 8.0) / 8.0;  // many ties
  for (std::size_t i = 0; i < rows; ++i) {
    p.y.push_back(p.x[i * cols] + 0.5 * nd(rng) > 0.3);
    p.w.push_back(p.y.back() ? 2.5 : 0.7);
  }
  return p;
}

double auc_scorer(std::span<const double> s, std::span<const int> y) { return roc_auc(s, y); }

}  // namespace

TEST_SUITE("kernels") {

TEST_CASE("sigmoid and clipping") {
  CHECK(k::sigmoid(0.0) == 0.5);
  CHECK(k::sigmoid(-800.0) >= 0.0);
  CHECK(k::sigmoid(800.0) <= 1.0);
  CHECK(k::sigmoid(2.0) + k::sigmoid(-2.0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(k::clip_probability(0.0) == k::kProbClip);
  CHECK(k::clip_probability(1.0) == 1.0 - k::kProbClip);
}

TEST_CASE("logits: parallel equals serial") {
  for (std::size_t rows : {1u, 7u, 300u, 5000u}) {
    const auto p = make_problem(rows, 6, rows);
    const std::vector<double> theta{0.3, -1.2, 0.0, 2.0, 0.01, -0.5};
    std::vector<double> a(rows), b(rows);
    k::serial::logits(p.view(), theta, 0.7, a);
    k::parallel::logits(p.view(), theta, 0.7, b);
    CHECK(a == b);
  }
}

TEST_CASE("loss and gradient: parallel agrees with serial to rounding") {
  for (std::size_t rows : {3u, 255u, 256u, 257u, 4000u}) {
    const auto p = make_problem(rows, 5, 40 + rows);
    const std::vector<double> theta{0.3, -1.2, 0.0, 2.0, 0.01};
    const auto a = k::serial::logistic_loss_grad(p.view(), p.y, p.w, theta, -0.4);
    const auto b = k::parallel::logistic_loss_grad(p.view(), p.y, p.w, theta, -0.4);
    CHECK(a.loss == doctest::Approx(b.loss).epsilon(1e-12));
    CHECK(a.grad_bias == doctest::Approx(b.grad_bias).epsilon(1e-12));
    for (std::size_t j = 0; j < theta.size(); ++j) CHECK(a.grad[j] == doctest::Approx(b.grad[j]).epsilon(1e-12));
  }
}

TEST_CASE("split search: parallel equals serial") {
  const auto p = make_problem(2000, 4, 9);
  std::vector<std::vector<std::uint32_t>> sorted(p.cols);
  for (std::size_t f = 0; f < p.cols; ++f) {
    sorted[f].resize(p.rows);
    std::iota(sorted[f].begin(), sorted[f].end(), 0u);
    std::stable_sort(sorted[f].begin(), sorted[f].end(),
                     [&](auto a, auto b) { return p.x[a * p.cols + f] < p.x[b * p.cols + f]; });
  }
  std::vector<double> g(p.rows), h(p.rows);
  std::vector<int> node(p.rows);
  for (std::size_t i = 0; i < p.rows; ++i) {
    g[i] = p.y[i] ? -0.8 : 0.3;
    h[i] = 0.2 + 0.01 * static_cast<double>(i % 7);
    node[i] = i % 11 == 0 ? -1 : static_cast<int>(i % 3);
  }
  const k::SplitSearchInput in{p.view(), sorted, g, h, node, 3, 1.0, 1e-3};
  const auto a = k::serial::find_best_splits(in);
  const auto b = k::parallel::find_best_splits(in);
  REQUIRE(a.size() == 3);
  REQUIRE(b.size() == 3);
  for (std::size_t n = 0; n < 3; ++n) {
    CHECK(a[n].valid());
    CHECK(a[n].feature == b[n].feature);
    CHECK(a[n].threshold == b[n].threshold);
    CHECK(a[n].gain == b[n].gain);
    CHECK(a[n].left_grad == b[n].left_grad);
    CHECK(a[n].right_hess == b[n].right_hess);
  }
}

TEST_CASE("permutation drops and bootstrap: parallel equals serial") {
  const auto p = make_problem(600, 3, 5);
  const k::PredictBatch predict = [](const k::MatrixView& x, std::span<double> out) {
    for (std::size_t i = 0; i < x.rows; ++i) out[i] = k::sigmoid(2.0 * x.data[i * x.cols] - 0.5 * x.data[i * x.cols + 2]);
  };
  const auto a = k::serial::permutation_drops(p.view(), p.y, predict, auc_scorer, 4, 99);
  const auto b = k::parallel::permutation_drops(p.view(), p.y, predict, auc_scorer, 4, 99);
  CHECK(a.mean_drop == b.mean_drop);
  CHECK(a.drops == b.drops);
  CHECK(a.mean_drop[1] == 0.0);
  CHECK(a.mean_drop[0] > 0.1);

  std::vector<double> s(p.rows);
  predict(p.view(), s);
  const auto ba = k::serial::bootstrap(s, p.y, auc_scorer, 200, 4);
  const auto bb = k::parallel::bootstrap(s, p.y, auc_scorer, 200, 4);
  CHECK(ba == bb);
  CHECK(ba.size() == 200);
  CHECK(k::derive_seed(1, 2, 3) == k::derive_seed(1, 2, 3));
  CHECK(k::derive_seed(1, 2, 3) != k::derive_seed(1, 3, 2));
}

}  // TEST_SUITE
