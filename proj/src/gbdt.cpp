#include "latentcpt/gbdt.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>

#include "latentcpt/error.hpp"

namespace latentcpt {

namespace {

const std::vector<std::string>& site_names() {
  static const std::vector<std::string> names{"PGA", "GWD", "L", "Slope", "Elevation"};
  return names;
}

void check_dim(const TreeEnsemble& ensemble, std::size_t n) {
  if (n != ensemble.n_features()) {
    throw Error(ErrorKind::DimensionMismatch, "expected " + std::to_string(ensemble.n_features()) +
                                                  " features, got " + std::to_string(n));
  }
}

double leaf_weight(double g, double h, double lambda) { return -g / (h + lambda); }

double score(double g, double h, double lambda) { return g * g / (h + lambda); }

struct SplitCandidate {
  int feature = -1;
  double threshold = 0.0;
  double gain = 0.0;
  std::size_t n_left = 0;
};

class TreeBuilder {
 public:
  TreeBuilder(const Eigen::MatrixXd& x, std::span<const double> g, std::span<const double> h,
              const GbdtConfig& cfg)
      : x_(x), g_(g), h_(h), cfg_(cfg) {}

  RegressionTree build(std::vector<int> rows) {
    tree_.nodes.clear();
    grow(std::move(rows), 0);
    return std::move(tree_);
  }

 private:
  int grow(std::vector<int> rows, int depth) {
    double g_sum = 0.0;
    double h_sum = 0.0;
    for (int r : rows) {
      g_sum += g_[static_cast<std::size_t>(r)];
      h_sum += h_[static_cast<std::size_t>(r)];
    }
    const int id = static_cast<int>(tree_.nodes.size());
    tree_.nodes.emplace_back();
    tree_.nodes[id].cover = h_sum;
    tree_.nodes[id].weight = leaf_weight(g_sum, h_sum, cfg_.l2_lambda);

    if (depth >= cfg_.max_depth || rows.size() < 2) return id;
    SplitCandidate best = find_split(rows, g_sum, h_sum);
    if (best.feature < 0 || !(best.gain > cfg_.min_split_gain)) return id;

    std::vector<int> left;
    std::vector<int> right;
    left.reserve(best.n_left);
    right.reserve(rows.size() - best.n_left);
    for (int r : rows) {
      (x_(r, best.feature) < best.threshold ? left : right).push_back(r);
    }
    rows.clear();
    rows.shrink_to_fit();

    const int l = grow(std::move(left), depth + 1);
    const int rr = grow(std::move(right), depth + 1);
    TreeNode& node = tree_.nodes[id];
    node.feature = best.feature;
    node.threshold = best.threshold;
    node.left = l;
    node.right = rr;
    node.gain = best.gain;
    node.weight = 0.0;
    return id;
  }

  SplitCandidate find_split(const std::vector<int>& rows, double g_sum, double h_sum) const {
    SplitCandidate best;
    const double parent = score(g_sum, h_sum, cfg_.l2_lambda);
    std::vector<int> sorted(rows);
    for (int f = 0; f < x_.cols(); ++f) {
      std::sort(sorted.begin(), sorted.end(), [&](int a, int b) {
        const double va = x_(a, f);
        const double vb = x_(b, f);
        return va < vb || (va == vb && a < b);
      });
      double gl = 0.0;
      double hl = 0.0;
      for (std::size_t j = 0; j + 1 < sorted.size(); ++j) {
        const int r = sorted[j];
        gl += g_[static_cast<std::size_t>(r)];
        hl += h_[static_cast<std::size_t>(r)];
        const double v = x_(r, f);
        const double next = x_(sorted[j + 1], f);
        if (!(v < next)) continue;
        const double hr = h_sum - hl;
        if (hl < cfg_.min_child_weight || hr < cfg_.min_child_weight) continue;
        const double gain = 0.5 * (score(gl, hl, cfg_.l2_lambda) +
                                   score(g_sum - gl, hr, cfg_.l2_lambda) - parent);
        if (gain > best.gain) {
          best = {f, next, gain, j + 1};
        }
      }
    }
    return best;
  }

  const Eigen::MatrixXd& x_;
  std::span<const double> g_;
  std::span<const double> h_;
  const GbdtConfig& cfg_;
  RegressionTree tree_;
};

double accuracy_of(const std::vector<double>& margins, const std::vector<int>& labels) {
  std::size_t correct = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int predicted = sigmoid(margins[i]) >= 0.5 ? 1 : 0;
    if (predicted == labels[i]) ++correct;
  }
  return static_cast<double>(correct) / static_cast<double>(labels.size());
}

}  // namespace

char variant_letter(FeatureVariant variant) {
  switch (variant) {
    case FeatureVariant::A: return 'A';
    case FeatureVariant::B: return 'B';
    case FeatureVariant::C: return 'C';
    case FeatureVariant::D: return 'D';
  }
  return '?';
}

FeatureVariant parse_variant(const std::string& letter) {
  if (letter == "A") return FeatureVariant::A;
  if (letter == "B") return FeatureVariant::B;
  if (letter == "C") return FeatureVariant::C;
  if (letter == "D") return FeatureVariant::D;
  throw Error(ErrorKind::InvalidInput, "unknown model variant '" + letter + "'");
}

std::vector<std::string> feature_names(FeatureVariant variant) {
  std::vector<std::string> names = site_names();
  switch (variant) {
    case FeatureVariant::A:
      break;
    case FeatureVariant::B:
      names.insert(names.end(), {"Ic_std", "Ic_median", "qc1Ncs_std", "qc1Ncs_median"});
      break;
    case FeatureVariant::C:
      for (std::size_t m = 0; m < kProfileRows; ++m) names.push_back("Ic_1m_" + std::to_string(m));
      for (std::size_t m = 0; m < kProfileRows; ++m) {
        names.push_back("qc1Ncs_1m_" + std::to_string(m));
      }
      break;
    case FeatureVariant::D:
      for (std::size_t i = 0; i < kLatentDim; ++i) names.push_back("I_c" + std::to_string(i));
      for (std::size_t i = 0; i < kLatentDim; ++i) names.push_back("q_c" + std::to_string(i));
      break;
  }
  return names;
}

std::vector<double> assemble_features(FeatureVariant variant, const SiteRecord& site,
                                      const RegularProfile* profile, const LatentPair* latents) {
  std::vector<double> x{site.pga, site.gwd, site.l_river, site.slope, site.elevation};
  switch (variant) {
    case FeatureVariant::A:
      break;
    case FeatureVariant::B: {
      if (profile == nullptr) {
        throw Error(ErrorKind::MissingInput, "variant B needs the CPT profile of " + site.site_id);
      }
      const auto f = std_median_features(*profile, site.gwd);
      x.insert(x.end(), f.begin(), f.end());
      break;
    }
    case FeatureVariant::C: {
      if (profile == nullptr) {
        throw Error(ErrorKind::MissingInput, "variant C needs the CPT profile of " + site.site_id);
      }
      const auto f = one_meter_averages(*profile);
      x.insert(x.end(), f.begin(), f.end());
      break;
    }
    case FeatureVariant::D:
      if (latents == nullptr) {
        throw Error(ErrorKind::MissingInput,
                    "variant D needs autoencoder latents for " + site.site_id);
      }
      x.insert(x.end(), latents->begin(), latents->end());
      break;
  }
  return x;
}

void check_labeled(const LabeledData& data) {
  if (static_cast<std::size_t>(data.features.rows()) != data.labels.size()) {
    throw Error(ErrorKind::DimensionMismatch, "feature rows and labels differ in count");
  }
  if (static_cast<std::size_t>(data.features.cols()) != data.feature_names.size()) {
    throw Error(ErrorKind::DimensionMismatch, "feature columns and names differ in count");
  }
  for (int y : data.labels) {
    if (y != 0 && y != 1) throw Error(ErrorKind::InvalidInput, "labels must be 0 or 1");
  }
  if (!data.features.allFinite()) {
    throw Error(ErrorKind::NonFiniteInput, "missing or non-finite feature values are not supported");
  }
}

int RegressionTree::leaf_index(std::span<const double> x) const {
  int id = 0;
  while (!nodes[static_cast<std::size_t>(id)].is_leaf()) {
    const TreeNode& n = nodes[static_cast<std::size_t>(id)];
    id = x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left : n.right;
  }
  return id;
}

int RegressionTree::depth() const {
  std::function<int(int)> walk = [&](int id) -> int {
    const TreeNode& n = nodes[static_cast<std::size_t>(id)];
    if (n.is_leaf()) return 0;
    return 1 + std::max(walk(n.left), walk(n.right));
  };
  return nodes.empty() ? 0 : walk(0);
}

void check_ensemble(const TreeEnsemble& ensemble) {
  if (!std::isfinite(ensemble.base_score) || !std::isfinite(ensemble.shrinkage)) {
    throw Error(ErrorKind::FormatError, "ensemble base score and shrinkage must be finite");
  }
  const int n_features = static_cast<int>(ensemble.n_features());
  for (const auto& tree : ensemble.trees) {
    if (tree.nodes.empty()) throw Error(ErrorKind::FormatError, "tree without nodes");
    const int n = static_cast<int>(tree.nodes.size());
    for (int i = 0; i < n; ++i) {
      const TreeNode& node = tree.nodes[static_cast<std::size_t>(i)];
      if (!(node.cover > 0.0)) throw Error(ErrorKind::FormatError, "node cover must be positive");
      if (node.is_leaf()) {
        if (!std::isfinite(node.weight)) throw Error(ErrorKind::FormatError, "non-finite leaf");
        continue;
      }
      if (node.feature >= n_features) {
        throw Error(ErrorKind::FormatError, "split feature index out of range");
      }
      if (!std::isfinite(node.threshold)) {
        throw Error(ErrorKind::FormatError, "non-finite split threshold");
      }
      // Children are stored after their parent, which rules out cycles.
      if (node.left <= i || node.right <= i || node.left >= n || node.right >= n) {
        throw Error(ErrorKind::FormatError, "invalid child link");
      }
    }
  }
}

double sigmoid(double margin) { return 1.0 / (1.0 + std::exp(-margin)); }

double predict_margin(const TreeEnsemble& ensemble, std::span<const double> x) {
  check_dim(ensemble, x.size());
  double sum = 0.0;
  for (const auto& tree : ensemble.trees) sum += tree.leaf_value(x);
  return ensemble.base_score + ensemble.shrinkage * sum;
}

double predict_proba(const TreeEnsemble& ensemble, std::span<const double> x) {
  return sigmoid(predict_margin(ensemble, x));
}

int predict_label(const TreeEnsemble& ensemble, std::span<const double> x) {
  return predict_proba(ensemble, x) >= 0.5 ? 1 : 0;
}

std::vector<int> predict_labels(const TreeEnsemble& ensemble, const Eigen::MatrixXd& rows) {
  std::vector<int> out(static_cast<std::size_t>(rows.rows()));
  std::vector<double> x(static_cast<std::size_t>(rows.cols()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) x[static_cast<std::size_t>(j)] = rows(i, j);
    out[static_cast<std::size_t>(i)] = predict_label(ensemble, x);
  }
  return out;
}

void validate(const GbdtConfig& cfg) {
  if (cfg.max_depth < 1) throw Error(ErrorKind::InvalidInput, "max_depth must be >= 1");
  if (cfg.early_stopping_rounds < 1) {
    throw Error(ErrorKind::InvalidInput, "early_stopping_rounds must be >= 1");
  }
  if (cfg.max_estimators < 1) throw Error(ErrorKind::InvalidInput, "max_estimators must be >= 1");
  if (!(cfg.learning_rate > 0.0)) throw Error(ErrorKind::InvalidInput, "learning_rate must be > 0");
  if (!(cfg.l2_lambda >= 0.0)) throw Error(ErrorKind::InvalidInput, "l2_lambda must be >= 0");
  if (!(cfg.min_child_weight >= 0.0)) {
    throw Error(ErrorKind::InvalidInput, "min_child_weight must be >= 0");
  }
  if (!(cfg.min_split_gain >= 0.0)) throw Error(ErrorKind::InvalidInput, "min_split_gain must be >= 0");
}

RegressionTree fit_tree(const Eigen::MatrixXd& features, std::span<const double> grad,
                        std::span<const double> hess, std::span<const int> rows,
                        const GbdtConfig& cfg) {
  validate(cfg);
  if (rows.empty()) throw Error(ErrorKind::InvalidInput, "cannot fit a tree on no rows");
  if (grad.size() != static_cast<std::size_t>(features.rows()) || hess.size() != grad.size()) {
    throw Error(ErrorKind::DimensionMismatch, "gradient statistics do not match the rows");
  }
  TreeBuilder builder(features, grad, hess, cfg);
  return builder.build(std::vector<int>(rows.begin(), rows.end()));
}

GbdtTrainResult train_gbdt(const LabeledData& train, const LabeledData& val,
                           const GbdtConfig& cfg) {
  validate(cfg);
  check_labeled(train);
  check_labeled(val);
  if (train.size() == 0 || val.size() == 0) {
    throw Error(ErrorKind::InvalidInput, "training and validation sets must be nonempty");
  }
  if (train.feature_names != val.feature_names) {
    throw Error(ErrorKind::DimensionMismatch, "training and validation features differ");
  }
  const double positives =
      static_cast<double>(std::accumulate(train.labels.begin(), train.labels.end(), 0));
  const double n = static_cast<double>(train.size());
  if (positives == 0.0 || positives == n) {
    throw Error(ErrorKind::SingleClassTraining, "training labels contain a single class");
  }

  GbdtTrainResult result;
  TreeEnsemble& ens = result.ensemble;
  ens.base_score = std::log(positives / (n - positives));
  ens.shrinkage = cfg.learning_rate;
  ens.feature_names = train.feature_names;

  std::vector<double> train_margin(train.size(), ens.base_score);
  std::vector<double> val_margin(val.size(), ens.base_score);
  std::vector<double> grad(train.size());
  std::vector<double> hess(train.size());
  std::vector<int> all_rows(train.size());
  std::iota(all_rows.begin(), all_rows.end(), 0);

  std::vector<double> x(train.feature_names.size());
  auto row_of = [&x](const Eigen::MatrixXd& m, std::size_t i) -> std::span<const double> {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      x[static_cast<std::size_t>(j)] = m(static_cast<Eigen::Index>(i), j);
    }
    return x;
  };

  double best_accuracy = -1.0;
  for (std::size_t round = 0; round < cfg.max_estimators; ++round) {
    for (std::size_t i = 0; i < train.size(); ++i) {
      const double p = sigmoid(train_margin[i]);
      grad[i] = p - train.labels[i];
      hess[i] = p * (1.0 - p);
    }
    RegressionTree tree = fit_tree(train.features, grad, hess, all_rows, cfg);
    for (std::size_t i = 0; i < train.size(); ++i) {
      train_margin[i] += cfg.learning_rate * tree.leaf_value(row_of(train.features, i));
    }
    for (std::size_t i = 0; i < val.size(); ++i) {
      val_margin[i] += cfg.learning_rate * tree.leaf_value(row_of(val.features, i));
    }
    ens.trees.push_back(std::move(tree));
    ++result.rounds_run;

    const double acc = accuracy_of(val_margin, val.labels);
    result.val_accuracy.push_back(acc);
    if (acc > best_accuracy) {
      best_accuracy = acc;
      result.best_round = round;
    } else if (round - result.best_round >= cfg.early_stopping_rounds) {
      break;
    }
  }
  ens.trees.resize(result.best_round + 1);
  return result;
}

}  // namespace latentcpt
