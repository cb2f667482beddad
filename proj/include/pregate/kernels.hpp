#pragma once

// Data-parallel inner loops. Every kernel exists twice: an OpenMP version used
// by the library and a plain serial reference kept for tests and benchmarks.
// Results are identical except logistic_loss_grad: the parallel version sums
// fixed-size row blocks in block order, so it is independent of thread count
// but agrees with the serial running sum only to rounding.

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

namespace pregate::kernels {

inline constexpr std::size_t kReductionBlock = 256;

// Row-major matrix view.
struct MatrixView {
  std::span<const double> data;
  std::size_t rows = 0;
  std::size_t cols = 0;

  std::span<const double> row(std::size_t i) const { return data.subspan(i * cols, cols); }
};

struct LossGrad {
  double loss = 0.0;            // sum_i w_i * bce_i
  std::vector<double> grad;     // d loss / d theta
  double grad_bias = 0.0;
};

inline constexpr double kProbClip = 1e-12;

double sigmoid(double z);
double clip_probability(double p);

// Tree split search over one level of a depth-wise tree.
struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  double left_grad = 0.0, left_hess = 0.0;
  double right_grad = 0.0, right_hess = 0.0;
  bool valid() const { return feature >= 0; }
};

struct SplitSearchInput {
  MatrixView x;
  // sorted_index[f] lists row ids ordered by x(row, f) ascending.
  std::span<const std::vector<std::uint32_t>> sorted_index;
  std::span<const double> grad;
  std::span<const double> hess;
  std::span<const int> row_node;  // level-local node id, -1 for rows not being split
  std::size_t node_count = 0;
  double l2 = 1.0;
  double min_child_hess = 1e-3;
};

using PredictBatch = std::function<void(const MatrixView&, std::span<double>)>;
using Scorer = std::function<double(std::span<const double> scores, std::span<const int> labels)>;

// Mean metric drop and per-repeat drops when each column is permuted.
struct PermutationResult {
  std::vector<double> mean_drop;
  std::vector<std::vector<double>> drops;  // [feature][repeat]
};

// Per-(feature, repeat) shuffle seed derived from the master seed.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b);

namespace serial {

LossGrad logistic_loss_grad(const MatrixView& x, std::span<const int> y, std::span<const double> sample_weight,
                            std::span<const double> theta, double bias);
void logits(const MatrixView& x, std::span<const double> theta, double bias, std::span<double> out);
std::vector<SplitCandidate> find_best_splits(const SplitSearchInput& in);
PermutationResult permutation_drops(const MatrixView& x, std::span<const int> y, const PredictBatch& predict,
                                    const Scorer& score, std::size_t repeats, std::uint64_t seed);
std::vector<double> bootstrap(std::span<const double> scores, std::span<const int> labels, const Scorer& score,
                              std::size_t resamples, std::uint64_t seed);

}  // namespace serial

namespace parallel {

LossGrad logistic_loss_grad(const MatrixView& x, std::span<const int> y, std::span<const double> sample_weight,
                            std::span<const double> theta, double bias);
void logits(const MatrixView& x, std::span<const double> theta, double bias, std::span<double> out);
std::vector<SplitCandidate> find_best_splits(const SplitSearchInput& in);
// `predict` and `score` must be safe to call concurrently.
PermutationResult permutation_drops(const MatrixView& x, std::span<const int> y, const PredictBatch& predict,
                                    const Scorer& score, std::size_t repeats, std::uint64_t seed);
std::vector<double> bootstrap(std::span<const double> scores, std::span<const int> labels, const Scorer& score,
                              std::size_t resamples, std::uint64_t seed);

}  // namespace parallel

int max_threads();

}  // namespace pregate::kernels
