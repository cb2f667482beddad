#include "pregate/model.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

#include "pregate/error.hpp"

namespace pregate {

using kernels::MatrixView;

std::string_view to_string(ModelKind kind) {
  return kind == ModelKind::Logistic ? "logistic" : "tree_ensemble";
}

Standardizer Standardizer::fit(const LabeledData& data) {
  Standardizer s;
  s.mean.assign(data.cols, 0.0);
  s.scale.assign(data.cols, 1.0);
  if (data.rows == 0) return s;
  const auto n = static_cast<double>(data.rows);
  for (std::size_t i = 0; i < data.rows; ++i) {
    auto r = data.row(i);
    for (std::size_t j = 0; j < data.cols; ++j) s.mean[j] += r[j];
  }
  for (auto& m : s.mean) m /= n;
  std::vector<double> var(data.cols, 0.0);
  for (std::size_t i = 0; i < data.rows; ++i) {
    auto r = data.row(i);
    for (std::size_t j = 0; j < data.cols; ++j) {
      const double d = r[j] - s.mean[j];
      var[j] += d * d;
    }
  }
  for (std::size_t j = 0; j < data.cols; ++j) {
    const double sd = std::sqrt(var[j] / n);
    s.scale[j] = sd > 1e-12 * std::max(1.0, std::abs(s.mean[j])) ? sd : 1.0;
  }
  return s;
}

Standardizer Standardizer::identity(std::size_t cols) {
  return {std::vector<double>(cols, 0.0), std::vector<double>(cols, 1.0)};
}

void Standardizer::apply(std::span<const double> in, std::span<double> out) const {
  for (std::size_t j = 0; j < in.size(); ++j) out[j] = (in[j] - mean[j]) / scale[j];
}

std::vector<double> Standardizer::apply_all(const MatrixView& x) const {
  std::vector<double> out(x.rows * x.cols);
  for (std::size_t i = 0; i < x.rows; ++i) apply(x.row(i), std::span<double>(out.data() + i * x.cols, x.cols));
  return out;
}

double RegressionTree::predict(std::span<const double> x) const {
  std::size_t k = 0;
  while (!nodes[k].is_leaf()) {
    const auto& n = nodes[k];
    k = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left : n.right);
  }
  return nodes[k].value;
}

AcceptanceModel::AcceptanceModel(std::vector<std::string> feature_names, Standardizer standardizer,
                                 LogisticParams params, double tau)
    : feature_names_(std::move(feature_names)), standardizer_(std::move(standardizer)), params_(std::move(params)) {
  check_shape();
  set_tau(tau);
}

AcceptanceModel::AcceptanceModel(std::vector<std::string> feature_names, Standardizer standardizer,
                                 EnsembleParams params, double tau)
    : feature_names_(std::move(feature_names)), standardizer_(std::move(standardizer)), params_(std::move(params)) {
  check_shape();
  set_tau(tau);
}

void AcceptanceModel::set_tau(double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw Error(ErrorCode::InvalidConfig, "threshold must lie in (0,1)");
  tau_ = tau;
}

void AcceptanceModel::check_shape() const {
  const auto d = feature_names_.size();
  if (standardizer_.mean.size() != d || standardizer_.scale.size() != d) {
    throw Error(ErrorCode::FeatureMismatch, "standardization size differs from feature list");
  }
  if (const auto* lp = logistic(); lp != nullptr && lp->weights.size() != d) {
    throw Error(ErrorCode::FeatureMismatch, "weight count differs from feature list");
  }
  if (const auto* ep = ensemble()) {
    for (const auto& t : ep->trees) {
      if (t.nodes.empty()) throw Error(ErrorCode::InvalidFormat, "empty tree");
      for (const auto& n : t.nodes) {
        if (n.is_leaf()) continue;
        const auto nn = static_cast<int>(t.nodes.size());
        if (static_cast<std::size_t>(n.feature) >= d || n.left <= 0 || n.right <= 0 || n.left >= nn ||
            n.right >= nn) {
          throw Error(ErrorCode::InvalidFormat, "malformed tree node");
        }
      }
    }
  }
}

double AcceptanceModel::raw_standardized(std::span<const double> z) const {
  if (const auto* lp = logistic()) {
    double s = lp->bias;
    for (std::size_t j = 0; j < z.size(); ++j) s += lp->weights[j] * z[j];
    return s;
  }
  const auto& ep = *ensemble();
  double s = ep.base_score;
  for (const auto& t : ep.trees) s += t.predict(z);
  return s;
}

double AcceptanceModel::raw_score(std::span<const double> x) const {
  if (x.size() != feature_names_.size()) {
    throw Error(ErrorCode::FeatureMismatch, "expected " + std::to_string(feature_names_.size()) +
                                                " features, got " + std::to_string(x.size()));
  }
  for (double v : x) {
    if (!std::isfinite(v)) throw Error(ErrorCode::FeatureMismatch, "non-finite feature value");
  }
  std::vector<double> z(x.size());
  standardizer_.apply(x, z);
  return raw_standardized(z);
}

double AcceptanceModel::predict_proba(std::span<const double> x) const {
  return kernels::clip_probability(kernels::sigmoid(raw_score(x)));
}

std::vector<double> AcceptanceModel::predict_proba(const MatrixView& x) const {
  if (x.cols != feature_names_.size()) throw Error(ErrorCode::FeatureMismatch, "batch has wrong column count");
  const auto z = standardizer_.apply_all(x);
  std::vector<double> out(x.rows);
  if (const auto* lp = logistic()) {
    kernels::parallel::logits(MatrixView{z, x.rows, x.cols}, lp->weights, lp->bias, out);
  } else {
    const auto rows = static_cast<std::ptrdiff_t>(x.rows);
#pragma omp parallel for schedule(static)
    for (std::ptrdiff_t i = 0; i < rows; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      out[ui] = raw_standardized(std::span<const double>(z.data() + ui * x.cols, x.cols));
    }
  }
  for (auto& v : out) v = kernels::clip_probability(kernels::sigmoid(v));
  return out;
}

std::vector<double> AcceptanceModel::predict_proba(const LabeledData& data) const {
  return predict_proba(MatrixView{data.x, data.rows, data.cols});
}

double weighted_bce(std::span<const double> preds, std::span<const int> labels, const ClassWeights& w) {
  if (preds.size() != labels.size()) {
    throw Error(ErrorCode::LengthMismatch, std::to_string(preds.size()) + " predictions vs " +
                                               std::to_string(labels.size()) + " labels");
  }
  double loss = 0.0;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    const double f = kernels::clip_probability(preds[i]);
    loss -= w.for_label(labels[i]) * (labels[i] == 1 ? std::log(f) : std::log1p(-f));
  }
  return loss;
}

double weighted_bce_mean(std::span<const double> preds, std::span<const int> labels, const ClassWeights& w) {
  if (preds.empty()) return 0.0;
  return weighted_bce(preds, labels, w) / static_cast<double>(preds.size());
}

namespace {

std::vector<double> sample_weights(std::span<const int> y, const ClassWeights& w) {
  std::vector<double> out(y.size());
  for (std::size_t i = 0; i < y.size(); ++i) out[i] = w.for_label(y[i]);
  return out;
}

void check_training_input(const LabeledData& train, const std::vector<std::string>& names) {
  if (names.size() != train.cols) {
    throw Error(ErrorCode::FeatureMismatch, "feature name count differs from data columns");
  }
  if (train.rows == 0) throw Error(ErrorCode::TooFewRecords, "empty training set");
}

}  // namespace

kernels::LossGrad logistic_objective(const MatrixView& z, std::span<const int> y, const ClassWeights& w,
                                     const LogisticParams& p, double l2) {
  const auto sw = sample_weights(y, w);
  auto lg = kernels::parallel::logistic_loss_grad(z, y, sw, p.weights, p.bias);
  const auto n = static_cast<double>(z.rows);
  double penalty = 0.0;
  for (std::size_t j = 0; j < p.weights.size(); ++j) {
    penalty += p.weights[j] * p.weights[j];
    lg.grad[j] = lg.grad[j] / n + 2.0 * l2 * p.weights[j];
  }
  lg.loss = lg.loss / n + l2 * penalty;
  lg.grad_bias /= n;
  return lg;
}

TrainResult train_logistic(const LabeledData& train, std::vector<std::string> feature_names,
                           const ClassWeights& w, const LogisticHyper& hyper) {
  check_training_input(train, feature_names);
  auto standardizer = Standardizer::fit(train);
  const auto z = standardizer.apply_all(MatrixView{train.x, train.rows, train.cols});
  const MatrixView zv{z, train.rows, train.cols};

  LogisticParams params{std::vector<double>(train.cols, 0.0), 0.0};
  auto current = logistic_objective(zv, train.y, w, params, hyper.l2);
  if (!std::isfinite(current.loss)) throw Error(ErrorCode::Divergence, "initial objective is not finite");

  TrainResult result;
  result.loss_history.push_back(current.loss);
  double lr = hyper.learning_rate;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    bool accepted = false;
    for (int halving = 0; halving < 60 && !accepted; ++halving) {
      LogisticParams next = params;
      for (std::size_t j = 0; j < next.weights.size(); ++j) next.weights[j] -= lr * current.grad[j];
      next.bias -= lr * current.grad_bias;
      auto trial = logistic_objective(zv, train.y, w, next, hyper.l2);
      if (std::isfinite(trial.loss) && trial.loss <= current.loss) {
        params = std::move(next);
        current = std::move(trial);
        accepted = true;
      } else {
        lr *= 0.5;
      }
    }
    if (!std::isfinite(current.loss)) throw Error(ErrorCode::Divergence, "objective became non-finite");
    result.loss_history.push_back(current.loss);
    if (!accepted) break;  // no descent step left at machine precision
  }
  result.model = AcceptanceModel(std::move(feature_names), std::move(standardizer), std::move(params));
  return result;
}

namespace {

struct TreeBuild {
  RegressionTree tree;
  std::vector<double> node_grad;
  std::vector<double> node_hess;
};

int add_node(TreeBuild& b, double g, double h) {
  b.tree.nodes.push_back(TreeNode{});
  b.node_grad.push_back(g);
  b.node_hess.push_back(h);
  return static_cast<int>(b.tree.nodes.size() - 1);
}

RegressionTree build_tree(const MatrixView& z, std::span<const std::vector<std::uint32_t>> sorted_index,
                          std::span<const double> grad, std::span<const double> hess, std::span<const char> in_sample,
                          const TreeHyper& hyper) {
  TreeBuild b;
  double g0 = 0.0;
  double h0 = 0.0;
  std::vector<int> row_node(z.rows, -1);
  for (std::size_t i = 0; i < z.rows; ++i) {
    if (!in_sample[i]) continue;
    row_node[i] = 0;
    g0 += grad[i];
    h0 += hess[i];
  }
  std::vector<int> level{add_node(b, g0, h0)};

  for (int depth = 0; depth < hyper.depth && !level.empty(); ++depth) {
    kernels::SplitSearchInput in{z, sorted_index, grad, hess, row_node, level.size(), hyper.l2_leaf,
                                 hyper.min_child_hess};
    const auto best = kernels::parallel::find_best_splits(in);

    std::vector<int> next_level;
    std::vector<int> left_local(level.size(), -1);
    for (std::size_t k = 0; k < level.size(); ++k) {
      if (!best[k].valid() || best[k].gain <= 1e-12) continue;
      const int id = level[k];
      const int l = add_node(b, best[k].left_grad, best[k].left_hess);
      const int r = add_node(b, best[k].right_grad, best[k].right_hess);
      auto& node = b.tree.nodes[static_cast<std::size_t>(id)];
      node.feature = best[k].feature;
      node.threshold = best[k].threshold;
      node.left = l;
      node.right = r;
      left_local[k] = static_cast<int>(next_level.size());
      next_level.push_back(l);
      next_level.push_back(r);
    }
    for (std::size_t i = 0; i < z.rows; ++i) {
      const int k = row_node[i];
      if (k < 0) continue;
      const int ll = left_local[static_cast<std::size_t>(k)];
      if (ll < 0) {
        row_node[i] = -1;
        continue;
      }
      const auto& node = b.tree.nodes[static_cast<std::size_t>(level[static_cast<std::size_t>(k)])];
      row_node[i] = z.data[i * z.cols + static_cast<std::size_t>(node.feature)] <= node.threshold ? ll : ll + 1;
    }
    level = std::move(next_level);
  }

  for (std::size_t k = 0; k < b.tree.nodes.size(); ++k) {
    if (b.tree.nodes[k].is_leaf()) b.tree.nodes[k].value = -b.node_grad[k] / (b.node_hess[k] + hyper.l2_leaf);
  }
  return b.tree;
}

double weighted_loss_from_logits(std::span<const double> f, std::span<const int> y, std::span<const double> sw) {
  double loss = 0.0;
  for (std::size_t i = 0; i < f.size(); ++i) {
    const double p = kernels::clip_probability(kernels::sigmoid(f[i]));
    loss -= sw[i] * (y[i] == 1 ? std::log(p) : std::log1p(-p));
  }
  return loss / static_cast<double>(f.size());
}

}  // namespace

TrainResult train_tree_ensemble(const LabeledData& train, std::vector<std::string> feature_names,
                                const ClassWeights& w, const TreeHyper& hyper) {
  check_training_input(train, feature_names);
  if (hyper.depth < 1 || hyper.n_trees < 0 || !(hyper.learning_rate > 0.0) || !(hyper.subsample > 0.0) ||
      hyper.subsample > 1.0) {
    throw Error(ErrorCode::InvalidConfig, "invalid tree ensemble hyperparameters");
  }
  auto standardizer = Standardizer::fit(train);
  const auto z = standardizer.apply_all(MatrixView{train.x, train.rows, train.cols});
  const MatrixView zv{z, train.rows, train.cols};
  const auto sw = sample_weights(train.y, w);

  std::vector<std::vector<std::uint32_t>> sorted_index(train.cols);
  for (std::size_t f = 0; f < train.cols; ++f) {
    auto& idx = sorted_index[f];
    idx.resize(train.rows);
    std::iota(idx.begin(), idx.end(), 0U);
    std::stable_sort(idx.begin(), idx.end(), [&](std::uint32_t a, std::uint32_t b) {
      return z[a * train.cols + f] < z[b * train.cols + f];
    });
  }

  double wy = 0.0;
  double wsum = 0.0;
  for (std::size_t i = 0; i < train.rows; ++i) {
    wy += sw[i] * train.y[i];
    wsum += sw[i];
  }
  const double base_rate = std::clamp(wy / wsum, kernels::kProbClip, 1.0 - kernels::kProbClip);

  EnsembleParams params;
  params.base_score = std::log(base_rate / (1.0 - base_rate));
  params.learning_rate = hyper.learning_rate;

  std::vector<double> logits(train.rows, params.base_score);
  std::vector<double> grad(train.rows);
  std::vector<double> hess(train.rows);
  std::vector<double> delta(train.rows);
  std::vector<double> trial(train.rows);
  std::vector<char> in_sample(train.rows, 1);

  TrainResult result;
  double loss = weighted_loss_from_logits(logits, train.y, sw);
  if (!std::isfinite(loss)) throw Error(ErrorCode::Divergence, "initial loss is not finite");
  result.loss_history.push_back(loss);

  for (int t = 0; t < hyper.n_trees; ++t) {
    for (std::size_t i = 0; i < train.rows; ++i) {
      const double p = kernels::sigmoid(logits[i]);
      grad[i] = sw[i] * (p - train.y[i]);
      hess[i] = std::max(sw[i] * p * (1.0 - p), 1e-16);
    }
    if (hyper.subsample < 1.0) {
      std::mt19937_64 rng(kernels::derive_seed(hyper.seed, static_cast<std::uint64_t>(t), 0));
      std::bernoulli_distribution keep(hyper.subsample);
      for (auto& s : in_sample) s = keep(rng) ? 1 : 0;
    }
    RegressionTree tree = build_tree(zv, sorted_index, grad, hess, in_sample, hyper);
    for (std::size_t i = 0; i < train.rows; ++i) delta[i] = tree.predict(zv.row(i));

    double shrink = hyper.learning_rate;
    bool accepted = false;
    double trial_loss = loss;
    for (int halving = 0; halving <= 20; ++halving, shrink *= 0.5) {
      for (std::size_t i = 0; i < train.rows; ++i) trial[i] = logits[i] + shrink * delta[i];
      trial_loss = weighted_loss_from_logits(trial, train.y, sw);
      if (!std::isfinite(trial_loss)) throw Error(ErrorCode::Divergence, "loss became non-finite");
      if (trial_loss <= loss) {
        accepted = true;
        break;
      }
    }
    if (!accepted) break;
    for (auto& n : tree.nodes) {
      if (n.is_leaf()) n.value *= shrink;
    }
    logits.swap(trial);
    loss = trial_loss;
    params.trees.push_back(std::move(tree));
    result.loss_history.push_back(loss);
  }
  result.model = AcceptanceModel(std::move(feature_names), std::move(standardizer), std::move(params));
  return result;
}

nlohmann::json model_to_json(const AcceptanceModel& m) {
  nlohmann::json j;
  j["format"] = kModelFormatTag;
  j["version"] = kModelFormatVersion;
  j["kind"] = to_string(m.kind());
  j["feature_names"] = m.feature_names();
  j["standardization"] = {{"mean", m.standardizer().mean}, {"scale", m.standardizer().scale}};
  j["tau"] = m.tau();
  if (const auto* lp = m.logistic()) {
    j["parameters"] = {{"weights", lp->weights}, {"bias", lp->bias}};
  } else {
    const auto& ep = *m.ensemble();
    nlohmann::json trees = nlohmann::json::array();
    for (const auto& t : ep.trees) {
      nlohmann::json nodes = nlohmann::json::array();
      for (const auto& n : t.nodes) {
        if (n.is_leaf()) {
          nodes.push_back({{"value", n.value}});
        } else {
          nodes.push_back({{"feature", n.feature}, {"threshold", n.threshold}, {"left", n.left}, {"right", n.right}});
        }
      }
      trees.push_back(std::move(nodes));
    }
    j["parameters"] = {{"base_score", ep.base_score}, {"learning_rate", ep.learning_rate}, {"trees", trees}};
  }
  return j;
}

AcceptanceModel model_from_json(const nlohmann::json& j, std::optional<std::span<const std::string>> expected) {
  try {
    if (j.value("format", std::string{}) != kModelFormatTag) {
      throw Error(ErrorCode::VersionMismatch, "not an acceptance model file");
    }
    if (j.at("version").get<int>() != kModelFormatVersion) {
      throw Error(ErrorCode::VersionMismatch, "unsupported model version " + j.at("version").dump());
    }
    auto names = j.at("feature_names").get<std::vector<std::string>>();
    if (expected && !std::equal(names.begin(), names.end(), expected->begin(), expected->end())) {
      throw Error(ErrorCode::FeatureMismatch, "model feature order differs from the expected order");
    }
    Standardizer s{j.at("standardization").at("mean").get<std::vector<double>>(),
                   j.at("standardization").at("scale").get<std::vector<double>>()};
    const double tau = j.at("tau").get<double>();
    const auto kind = j.at("kind").get<std::string>();
    const auto& p = j.at("parameters");
    if (kind == "logistic") {
      LogisticParams lp{p.at("weights").get<std::vector<double>>(), p.at("bias").get<double>()};
      return AcceptanceModel(std::move(names), std::move(s), std::move(lp), tau);
    }
    if (kind == "tree_ensemble") {
      EnsembleParams ep;
      ep.base_score = p.at("base_score").get<double>();
      ep.learning_rate = p.at("learning_rate").get<double>();
      for (const auto& tj : p.at("trees")) {
        RegressionTree t;
        for (const auto& nj : tj) {
          TreeNode n;
          if (nj.contains("value")) {
            n.value = nj.at("value").get<double>();
          } else {
            n.feature = nj.at("feature").get<int>();
            n.threshold = nj.at("threshold").get<double>();
            n.left = nj.at("left").get<int>();
            n.right = nj.at("right").get<int>();
          }
          t.nodes.push_back(n);
        }
        ep.trees.push_back(std::move(t));
      }
      return AcceptanceModel(std::move(names), std::move(s), std::move(ep), tau);
    }
    throw Error(ErrorCode::InvalidFormat, "unknown model kind '" + kind + "'");
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidFormat, std::string("model file: ") + e.what());
  }
}

void save_model(const AcceptanceModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorCode::Io, "cannot write " + path.string());
  out << model_to_json(m).dump(2) << '\n';
  if (!out) throw Error(ErrorCode::Io, "write failed for " + path.string());
}

AcceptanceModel load_model(const std::filesystem::path& path, std::optional<std::span<const std::string>> expected) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::Io, "cannot read " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::InvalidFormat, std::string("model file: ") + e.what());
  }
  return model_from_json(j, expected);
}

}  // namespace pregate
