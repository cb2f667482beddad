#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "json.hpp"
#include "pregate/dataset.hpp"
#include "pregate/features.hpp"
#include "pregate/kernels.hpp"

namespace pregate {

inline constexpr int kModelFormatVersion = 1;
inline constexpr std::string_view kModelFormatTag = "pregate-acceptance-model";

enum class ModelKind { Logistic, TreeEnsemble };
std::string_view to_string(ModelKind kind);

// Per-feature (mean, scale) fitted on training rows; constant columns get scale 1.
struct Standardizer {
  std::vector<double> mean;
  std::vector<double> scale;

  static Standardizer fit(const LabeledData& data);
  static Standardizer identity(std::size_t cols);
  void apply(std::span<const double> in, std::span<double> out) const;
  std::vector<double> apply_all(const kernels::MatrixView& x) const;
  std::size_t size() const { return mean.size(); }
};

struct LogisticParams {
  std::vector<double> weights;
  double bias = 0.0;
};

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // go left when x[feature] <= threshold
  int left = -1;
  int right = -1;
  double value = 0.0;  // leaf contribution to the logit, shrinkage included

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  double predict(std::span<const double> x) const;
};

struct EnsembleParams {
  double base_score = 0.0;  // logit of the weighted base rate
  double learning_rate = 0.1;
  std::vector<RegressionTree> trees;
};

class AcceptanceModel {
 public:
  AcceptanceModel() = default;
  AcceptanceModel(std::vector<std::string> feature_names, Standardizer standardizer, LogisticParams params,
                  double tau = 0.5);
  AcceptanceModel(std::vector<std::string> feature_names, Standardizer standardizer, EnsembleParams params,
                  double tau = 0.5);

  ModelKind kind() const { return std::holds_alternative<LogisticParams>(params_) ? ModelKind::Logistic
                                                                                  : ModelKind::TreeEnsemble; }
  const std::vector<std::string>& feature_names() const { return feature_names_; }
  const Standardizer& standardizer() const { return standardizer_; }
  const LogisticParams* logistic() const { return std::get_if<LogisticParams>(&params_); }
  const EnsembleParams* ensemble() const { return std::get_if<EnsembleParams>(&params_); }
  double tau() const { return tau_; }
  void set_tau(double tau);

  // Logit before the sigmoid. Throws Error{FeatureMismatch} on wrong length or
  // non-finite input.
  double raw_score(std::span<const double> x) const;
  // In (0,1), clipped to [1e-12, 1 - 1e-12].
  double predict_proba(std::span<const double> x) const;
  double predict_proba(const FeatureVector& x) const { return predict_proba(x.values); }
  // Batch over rows (OpenMP).
  std::vector<double> predict_proba(const kernels::MatrixView& x) const;
  std::vector<double> predict_proba(const LabeledData& data) const;

 private:
  double raw_standardized(std::span<const double> z) const;
  void check_shape() const;

  std::vector<std::string> feature_names_;
  Standardizer standardizer_;
  std::variant<LogisticParams, EnsembleParams> params_;
  double tau_ = 0.5;
};

// -sum_i w_{y_i} [y_i ln f_i + (1-y_i) ln(1-f_i)], predictions clipped to
// [1e-12, 1-1e-12]. Throws Error{LengthMismatch}.
double weighted_bce(std::span<const double> preds, std::span<const int> labels, const ClassWeights& w);
// Sum divided by the number of samples.
double weighted_bce_mean(std::span<const double> preds, std::span<const int> labels, const ClassWeights& w);

struct LogisticHyper {
  double learning_rate = 0.5;
  int epochs = 400;
  double l2 = 1e-4;
  std::uint64_t seed = 0;
};

struct TreeHyper {
  int n_trees = 200;
  int depth = 4;
  double learning_rate = 0.1;
  double l2_leaf = 1.0;
  double min_child_hess = 1e-3;
  double subsample = 1.0;  // < 1 draws a seeded row sample per stage
  std::uint64_t seed = 0;
};

struct TrainResult {
  AcceptanceModel model;
  std::vector<double> loss_history;  // training objective after each epoch/stage, index 0 = initial
};

// Objective on standardized rows: (1/n) sum_i w_i bce_i + l2 * |theta|^2, with gradient.
kernels::LossGrad logistic_objective(const kernels::MatrixView& z, std::span<const int> y,
                                     const ClassWeights& w, const LogisticParams& p, double l2);

// Full-batch gradient descent from zero; the step is halved and retried whenever
// the objective would increase. Throws Error{Divergence} on a non-finite objective.
TrainResult train_logistic(const LabeledData& train, std::vector<std::string> feature_names,
                           const ClassWeights& w, const LogisticHyper& hyper);

// Second-order boosting of depth-limited regression trees on the weighted log-loss.
// A stage that would raise the training loss has its shrinkage halved (up to 20
// times) and is dropped if that fails.
TrainResult train_tree_ensemble(const LabeledData& train, std::vector<std::string> feature_names,
                                const ClassWeights& w, const TreeHyper& hyper);

nlohmann::json model_to_json(const AcceptanceModel& m);
// Refuses unknown format tags/versions and, when given, a different feature order.
AcceptanceModel model_from_json(const nlohmann::json& j,
                                std::optional<std::span<const std::string>> expected_features = std::nullopt);

void save_model(const AcceptanceModel& m, const std::filesystem::path& path);
AcceptanceModel load_model(const std::filesystem::path& path,
                           std::optional<std::span<const std::string>> expected_features = std::nullopt);

}  // namespace pregate
