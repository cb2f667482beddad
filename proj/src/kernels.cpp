#include "pregate/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace pregate::kernels {

double sigmoid(double z) {
  if (z >= 0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

double clip_probability(double p) { return std::clamp(p, kProbClip, 1.0 - kProbClip); }

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Accumulates one row into (loss, grad) with the bce of a single sample.
inline void accumulate_row(std::span<const double> row, int y, double w, std::span<const double> theta, double bias,
                           double& loss, std::span<double> grad, double& grad_bias) {
  double z = bias;
  for (std::size_t j = 0; j < row.size(); ++j) z += theta[j] * row[j];
  const double p = clip_probability(sigmoid(z));
  loss -= w * (y == 1 ? std::log(p) : std::log1p(-p));
  const double r = w * (sigmoid(z) - static_cast<double>(y));
  for (std::size_t j = 0; j < row.size(); ++j) grad[j] += r * row[j];
  grad_bias += r;
}

struct NodeTotals {
  std::vector<double> grad;
  std::vector<double> hess;
};

NodeTotals node_totals(const SplitSearchInput& in) {
  NodeTotals t{std::vector<double>(in.node_count, 0.0), std::vector<double>(in.node_count, 0.0)};
  for (std::size_t r = 0; r < in.row_node.size(); ++r) {
    const int k = in.row_node[r];
    if (k < 0) continue;
    t.grad[static_cast<std::size_t>(k)] += in.grad[r];
    t.hess[static_cast<std::size_t>(k)] += in.hess[r];
  }
  return t;
}

void scan_feature(const SplitSearchInput& in, const NodeTotals& totals, std::size_t f,
                  std::vector<SplitCandidate>& best) {
  const std::size_t nodes = in.node_count;
  std::vector<double> gl(nodes, 0.0);
  std::vector<double> hl(nodes, 0.0);
  std::vector<double> prev(nodes, 0.0);
  std::vector<char> seen(nodes, 0);
  best.assign(nodes, SplitCandidate{});

  for (std::uint32_t r : in.sorted_index[f]) {
    const int kk = in.row_node[r];
    if (kk < 0) continue;
    const auto k = static_cast<std::size_t>(kk);
    const double v = in.x.data[static_cast<std::size_t>(r) * in.x.cols + f];
    if (seen[k] && v > prev[k]) {
      const double gr = totals.grad[k] - gl[k];
      const double hr = totals.hess[k] - hl[k];
      if (hl[k] >= in.min_child_hess && hr >= in.min_child_hess) {
        const double gain = gl[k] * gl[k] / (hl[k] + in.l2) + gr * gr / (hr + in.l2) -
                            totals.grad[k] * totals.grad[k] / (totals.hess[k] + in.l2);
        if (gain > best[k].gain) {
          double thr = prev[k] + (v - prev[k]) / 2.0;
          if (!(thr < v)) thr = prev[k];
          best[k] = {static_cast<int>(f), thr, gain, gl[k], hl[k], gr, hr};
        }
      }
    }
    gl[k] += in.grad[r];
    hl[k] += in.hess[r];
    prev[k] = v;
    seen[k] = 1;
  }
}

std::vector<SplitCandidate> merge_features(const std::vector<std::vector<SplitCandidate>>& per_feature,
                                           std::size_t nodes) {
  std::vector<SplitCandidate> out(nodes);
  for (const auto& cand : per_feature) {
    for (std::size_t k = 0; k < nodes; ++k) {
      if (cand[k].valid() && cand[k].gain > out[k].gain) out[k] = cand[k];
    }
  }
  return out;
}

void permute_column(std::vector<double>& buf, const MatrixView& x, std::size_t f, std::uint64_t seed) {
  std::vector<std::size_t> perm(x.rows);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  std::mt19937_64 rng(seed);
  std::shuffle(perm.begin(), perm.end(), rng);
  for (std::size_t i = 0; i < x.rows; ++i) buf[i * x.cols + f] = x.data[perm[i] * x.cols + f];
}

double safe_score(const Scorer& score, std::span<const double> s, std::span<const int> y) {
  try {
    return score(s, y);
  } catch (...) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

void permutation_feature(const MatrixView& x, std::span<const int> y, const PredictBatch& predict,
                         const Scorer& score, double base, std::size_t f, std::size_t repeats, std::uint64_t seed,
                         std::vector<double>& buf, std::vector<double>& drops) {
  std::vector<double> scores(x.rows);
  drops.assign(repeats, 0.0);
  for (std::size_t r = 0; r < repeats; ++r) {
    buf.assign(x.data.begin(), x.data.end());
    permute_column(buf, x, f, derive_seed(seed, f, r));
    predict(MatrixView{buf, x.rows, x.cols}, scores);
    drops[r] = base - safe_score(score, scores, y);
  }
}

double bootstrap_one(std::span<const double> scores, std::span<const int> labels, const Scorer& score,
                     std::uint64_t seed) {
  const std::size_t n = scores.size();
  std::mt19937_64 rng(seed);
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  std::vector<double> s(n);
  std::vector<int> y(n);
  for (std::size_t i = 0; i < n; ++i) {
    const auto j = pick(rng);
    s[i] = scores[j];
    y[i] = labels[j];
  }
  return safe_score(score, s, y);
}

std::vector<double> mean_rows(const std::vector<std::vector<double>>& drops) {
  std::vector<double> out(drops.size(), 0.0);
  for (std::size_t f = 0; f < drops.size(); ++f) {
    double sum = 0.0;
    for (double d : drops[f]) sum += d;
    out[f] = drops[f].empty() ? 0.0 : sum / static_cast<double>(drops[f].size());
  }
  return out;
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) {
  return splitmix64(splitmix64(master ^ splitmix64(a + 1)) ^ splitmix64(b + 0x632BE59BD9B4E019ULL));
}

namespace serial {

LossGrad logistic_loss_grad(const MatrixView& x, std::span<const int> y, std::span<const double> sample_weight,
                            std::span<const double> theta, double bias) {
  LossGrad out;
  out.grad.assign(x.cols, 0.0);
  for (std::size_t i = 0; i < x.rows; ++i) {
    accumulate_row(x.row(i), y[i], sample_weight[i], theta, bias, out.loss, out.grad, out.grad_bias);
  }
  return out;
}

void logits(const MatrixView& x, std::span<const double> theta, double bias, std::span<double> out) {
  for (std::size_t i = 0; i < x.rows; ++i) {
    double z = bias;
    auto row = x.row(i);
    for (std::size_t j = 0; j < x.cols; ++j) z += theta[j] * row[j];
    out[i] = z;
  }
}

std::vector<SplitCandidate> find_best_splits(const SplitSearchInput& in) {
  const auto totals = node_totals(in);
  std::vector<std::vector<SplitCandidate>> per_feature(in.x.cols);
  for (std::size_t f = 0; f < in.x.cols; ++f) scan_feature(in, totals, f, per_feature[f]);
  return merge_features(per_feature, in.node_count);
}

PermutationResult permutation_drops(const MatrixView& x, std::span<const int> y, const PredictBatch& predict,
                                    const Scorer& score, std::size_t repeats, std::uint64_t seed) {
  std::vector<double> base_scores(x.rows);
  predict(x, base_scores);
  const double base = score(base_scores, y);
  PermutationResult out;
  out.drops.resize(x.cols);
  std::vector<double> buf;
  for (std::size_t f = 0; f < x.cols; ++f) {
    permutation_feature(x, y, predict, score, base, f, repeats, seed, buf, out.drops[f]);
  }
  out.mean_drop = mean_rows(out.drops);
  return out;
}

std::vector<double> bootstrap(std::span<const double> scores, std::span<const int> labels, const Scorer& score,
                              std::size_t resamples, std::uint64_t seed) {
  std::vector<double> out(resamples);
  if (scores.empty()) return out;
  for (std::size_t b = 0; b < resamples; ++b) out[b] = bootstrap_one(scores, labels, score, derive_seed(seed, b, 0));
  return out;
}

}  // namespace serial

namespace parallel {

LossGrad logistic_loss_grad(const MatrixView& x, std::span<const int> y, std::span<const double> sample_weight,
                            std::span<const double> theta, double bias) {
  const std::size_t blocks = (x.rows + kReductionBlock - 1) / kReductionBlock;
  std::vector<double> partial((x.cols + 2) * blocks, 0.0);
  const auto nblocks = static_cast<std::ptrdiff_t>(blocks);

#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < nblocks; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    double* slot = partial.data() + ub * (x.cols + 2);
    std::span<double> grad(slot + 2, x.cols);
    const std::size_t end = std::min(x.rows, (ub + 1) * kReductionBlock);
    for (std::size_t i = ub * kReductionBlock; i < end; ++i) {
      accumulate_row(x.row(i), y[i], sample_weight[i], theta, bias, slot[0], grad, slot[1]);
    }
  }

  LossGrad out;
  out.grad.assign(x.cols, 0.0);
  for (std::size_t b = 0; b < blocks; ++b) {
    const double* slot = partial.data() + b * (x.cols + 2);
    out.loss += slot[0];
    out.grad_bias += slot[1];
    for (std::size_t j = 0; j < x.cols; ++j) out.grad[j] += slot[2 + j];
  }
  return out;
}

void logits(const MatrixView& x, std::span<const double> theta, double bias, std::span<double> out) {
  const auto rows = static_cast<std::ptrdiff_t>(x.rows);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t i = 0; i < rows; ++i) {
    double z = bias;
    auto row = x.row(static_cast<std::size_t>(i));
    for (std::size_t j = 0; j < x.cols; ++j) z += theta[j] * row[j];
    out[static_cast<std::size_t>(i)] = z;
  }
}

std::vector<SplitCandidate> find_best_splits(const SplitSearchInput& in) {
  const auto totals = node_totals(in);
  std::vector<std::vector<SplitCandidate>> per_feature(in.x.cols);
  const auto cols = static_cast<std::ptrdiff_t>(in.x.cols);
#pragma omp parallel for schedule(dynamic)
  for (std::ptrdiff_t f = 0; f < cols; ++f) {
    scan_feature(in, totals, static_cast<std::size_t>(f), per_feature[static_cast<std::size_t>(f)]);
  }
  return merge_features(per_feature, in.node_count);
}

PermutationResult permutation_drops(const MatrixView& x, std::span<const int> y, const PredictBatch& predict,
                                    const Scorer& score, std::size_t repeats, std::uint64_t seed) {
  std::vector<double> base_scores(x.rows);
  predict(x, base_scores);
  const double base = score(base_scores, y);
  PermutationResult out;
  out.drops.resize(x.cols);
  const auto cols = static_cast<std::ptrdiff_t>(x.cols);
#pragma omp parallel
  {
    std::vector<double> buf;
#pragma omp for schedule(dynamic)
    for (std::ptrdiff_t f = 0; f < cols; ++f) {
      const auto uf = static_cast<std::size_t>(f);
      permutation_feature(x, y, predict, score, base, uf, repeats, seed, buf, out.drops[uf]);
    }
  }
  out.mean_drop = mean_rows(out.drops);
  return out;
}

std::vector<double> bootstrap(std::span<const double> scores, std::span<const int> labels, const Scorer& score,
                              std::size_t resamples, std::uint64_t seed) {
  std::vector<double> out(resamples);
  if (scores.empty()) return out;
  const auto n = static_cast<std::ptrdiff_t>(resamples);
#pragma omp parallel for schedule(static)
  for (std::ptrdiff_t b = 0; b < n; ++b) {
    const auto ub = static_cast<std::size_t>(b);
    out[ub] = bootstrap_one(scores, labels, score, derive_seed(seed, ub, 0));
  }
  return out;
}

}  // namespace parallel

}  // namespace pregate::kernels
