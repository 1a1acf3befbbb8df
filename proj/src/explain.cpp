#include "latentcpt/explain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "latentcpt/error.hpp"
#include "latentcpt/random.hpp"

namespace latentcpt {

namespace {

enum class Side : unsigned char { Free, Foreground, Background };

// Shapley weight of a feature in a leaf that needs `a` features from the
// explained row and `b` from the background row: (a-1)! b! / (a+b)!.
class FactorialTable {
 public:
  FactorialTable() {
    values_[0] = 1.0;
    for (std::size_t i = 1; i < values_.size(); ++i) values_[i] = values_[i - 1] * i;
  }
  double operator()(std::size_t n) const { return values_.at(n); }

 private:
  std::array<double, 171> values_{};
};

const FactorialTable& factorial() {
  static const FactorialTable table;
  return table;
}

class PairwiseTreeShap {
 public:
  PairwiseTreeShap(const RegressionTree& tree, double scale, std::span<const double> x,
                   std::vector<double>& phi)
      : tree_(tree), scale_(scale), x_(x), phi_(phi), side_(x.size(), Side::Free) {}

  void run(std::span<const double> reference) {
    ref_ = reference;
    foreground_.clear();
    background_.clear();
    visit(0);
  }

 private:
  void visit(int id) {
    const TreeNode& node = tree_.nodes[static_cast<std::size_t>(id)];
    if (node.is_leaf()) {
      credit(scale_ * node.weight);
      return;
    }
    const auto f = static_cast<std::size_t>(node.feature);
    const int x_child = x_[f] < node.threshold ? node.left : node.right;
    const int r_child = ref_[f] < node.threshold ? node.left : node.right;
    if (x_child == r_child) {
      visit(x_child);
      return;
    }
    switch (side_[f]) {
      case Side::Foreground:
        visit(x_child);
        return;
      case Side::Background:
        visit(r_child);
        return;
      case Side::Free:
        side_[f] = Side::Foreground;
        foreground_.push_back(f);
        visit(x_child);
        foreground_.pop_back();
        side_[f] = Side::Background;
        background_.push_back(f);
        visit(r_child);
        background_.pop_back();
        side_[f] = Side::Free;
        return;
    }
  }

  void credit(double value) {
    const std::size_t a = foreground_.size();
    const std::size_t b = background_.size();
    if (a + b == 0) return;
    const FactorialTable& fact = factorial();
    const double denom = fact(a + b);
    if (a > 0) {
      const double w = value * fact(a - 1) * fact(b) / denom;
      for (std::size_t f : foreground_) phi_[f] += w;
    }
    if (b > 0) {
      const double w = value * fact(a) * fact(b - 1) / denom;
      for (std::size_t f : background_) phi_[f] -= w;
    }
  }

  const RegressionTree& tree_;
  double scale_;
  std::span<const double> x_;
  std::span<const double> ref_;
  std::vector<double>& phi_;
  std::vector<Side> side_;
  std::vector<std::size_t> foreground_;
  std::vector<std::size_t> background_;
};

std::vector<double> row_vector(const Eigen::MatrixXd& m, Eigen::Index i) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

}  // namespace

ShapAttribution tree_shap(const TreeEnsemble& ensemble, std::span<const double> x,
                          const Eigen::MatrixXd& background) {
  const std::size_t m = ensemble.n_features();
  if (x.size() != m) {
    throw Error(ErrorKind::DimensionMismatch,
                "row has " + std::to_string(x.size()) + " features, model has " + std::to_string(m));
  }
  if (background.rows() == 0) throw Error(ErrorKind::EmptyBackground, "background set is empty");
  if (static_cast<std::size_t>(background.cols()) != m) {
    throw Error(ErrorKind::DimensionMismatch, "background width does not match the model");
  }

  ShapAttribution out;
  out.feature_names = ensemble.feature_names;
  out.values.assign(m, 0.0);

  std::vector<std::vector<double>> refs;
  refs.reserve(static_cast<std::size_t>(background.rows()));
  double margin_sum = 0.0;
  for (Eigen::Index r = 0; r < background.rows(); ++r) {
    refs.push_back(row_vector(background, r));
    margin_sum += predict_margin(ensemble, refs.back());
  }
  out.base_value = margin_sum / static_cast<double>(background.rows());

  for (const auto& tree : ensemble.trees) {
    PairwiseTreeShap walker(tree, ensemble.shrinkage, x, out.values);
    for (const auto& ref : refs) walker.run(ref);
  }
  const double n_ref = static_cast<double>(background.rows());
  for (double& v : out.values) v /= n_ref;
  return out;
}

Eigen::MatrixXd select_background(const Eigen::MatrixXd& rows, std::size_t cap,
                                  std::uint64_t seed) {
  const auto n = static_cast<std::size_t>(rows.rows());
  if (n <= cap) return rows;
  std::vector<Eigen::Index> order(n);
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  Rng rng(seed);
  rng.shuffle(order);
  order.resize(cap);
  std::sort(order.begin(), order.end());
  Eigen::MatrixXd out(static_cast<Eigen::Index>(cap), rows.cols());
  for (std::size_t i = 0; i < cap; ++i) out.row(static_cast<Eigen::Index>(i)) = rows.row(order[i]);
  return out;
}

std::vector<BeeswarmPoint> GlobalExplanation::beeswarm() const {
  std::vector<BeeswarmPoint> points;
  points.reserve(static_cast<std::size_t>(shap_values.size()));
  for (Eigen::Index i = 0; i < shap_values.rows(); ++i) {
    for (Eigen::Index j = 0; j < shap_values.cols(); ++j) {
      points.push_back({static_cast<std::size_t>(i), static_cast<std::size_t>(j),
                        feature_values(i, j), shap_values(i, j)});
    }
  }
  return points;
}

std::size_t GlobalExplanation::feature_index(const std::string& name) const {
  const auto it = std::find(feature_names.begin(), feature_names.end(), name);
  if (it == feature_names.end()) {
    throw Error(ErrorKind::UnknownFeature, "unknown feature '" + name + "'");
  }
  return static_cast<std::size_t>(it - feature_names.begin());
}

GlobalExplanation global_explanation(const TreeEnsemble& ensemble, const Eigen::MatrixXd& rows,
                                     const Eigen::MatrixXd& background, std::size_t top_k) {
  if (rows.rows() == 0) throw Error(ErrorKind::InvalidInput, "cannot explain an empty dataset");
  GlobalExplanation g;
  g.feature_names = ensemble.feature_names;
  g.top_k = top_k;
  g.feature_values = rows;
  g.shap_values.resize(rows.rows(), static_cast<Eigen::Index>(ensemble.n_features()));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const ShapAttribution a = tree_shap(ensemble, row_vector(rows, i), background);
    g.base_value = a.base_value;
    for (std::size_t j = 0; j < a.values.size(); ++j) {
      g.shap_values(i, static_cast<Eigen::Index>(j)) = a.values[j];
    }
  }
  const Eigen::VectorXd mean_abs = g.shap_values.cwiseAbs().colwise().mean().transpose();
  for (std::size_t j = 0; j < g.feature_names.size(); ++j) {
    g.ranking.push_back({g.feature_names[j], j, mean_abs(static_cast<Eigen::Index>(j))});
  }
  std::stable_sort(g.ranking.begin(), g.ranking.end(),
                   [](const FeatureImportance& a, const FeatureImportance& b) {
                     return a.mean_abs_shap > b.mean_abs_shap;
                   });
  for (std::size_t r = top_k; r < g.ranking.size(); ++r) {
    g.remainder += g.ranking[r].mean_abs_shap;
    ++g.remainder_count;
  }
  return g;
}

std::vector<DependencyRow> dependency_data(const GlobalExplanation& explanation,
                                           const std::string& feature,
                                           const std::string& color_feature) {
  const auto f = static_cast<Eigen::Index>(explanation.feature_index(feature));
  const auto c = static_cast<Eigen::Index>(explanation.feature_index(color_feature));
  std::vector<DependencyRow> rows;
  rows.reserve(static_cast<std::size_t>(explanation.shap_values.rows()));
  for (Eigen::Index i = 0; i < explanation.shap_values.rows(); ++i) {
    rows.push_back({explanation.feature_values(i, f), explanation.shap_values(i, f),
                    explanation.feature_values(i, c)});
  }
  return rows;
}

RegionSelection region_reconstruct(const AutoencoderModel& model,
                                   std::span<const LatentVector> latents, std::size_t k,
                                   double lo, double hi) {
  if (k >= kLatentDim) throw Error(ErrorKind::IndexOutOfRange, "latent index must be < 10");
  if (!(lo < hi)) throw Error(ErrorKind::InvalidInput, "region needs lo < hi");
  RegionSelection out;
  for (std::size_t i = 0; i < latents.size(); ++i) {
    const double v = latents[i][k];
    if (v >= lo && v <= hi) {
      out.indices.push_back(i);
      out.profiles.push_back(decode(model, latents[i]));
    }
  }
  return out;
}

std::vector<double> default_probe_offsets() {
  std::vector<double> offsets;
  for (int i = -8; i <= 8; ++i) offsets.push_back(0.5 * i);
  return offsets;
}

ProbeResult perturbation_probe(const AutoencoderModel& model,
                               std::span<const LatentVector> latents, std::size_t k,
                               std::span<const double> offsets, std::size_t n_samples,
                               std::uint64_t seed) {
  if (k >= kLatentDim) throw Error(ErrorKind::IndexOutOfRange, "latent index must be < 10");
  if (latents.empty()) throw Error(ErrorKind::InvalidInput, "probe needs a nonempty latent table");
  if (n_samples < 1) throw Error(ErrorKind::InvalidInput, "probe needs n_samples >= 1");
  const auto zero = std::find(offsets.begin(), offsets.end(), 0.0);
  if (zero == offsets.end()) {
    throw Error(ErrorKind::InvalidInput, "probe offsets must include 0 (the reference)");
  }
  check_autoencoder(model);

  Rng rng(seed);
  std::vector<LatentVector> draws(n_samples);
  for (auto& z : draws) {
    for (std::size_t j = 0; j < kLatentDim; ++j) {
      z[j] = j == k ? 0.0 : latents[rng.index(latents.size())][j];
    }
  }

  ProbeResult out;
  out.latent_index = k;
  out.n_samples = n_samples;
  out.seed = seed;
  out.offsets.assign(offsets.begin(), offsets.end());
  for (double delta : offsets) {
    ChannelArray mean{};
    for (auto z : draws) {
      z[k] = delta;
      const ChannelArray p = decode(model, z);
      for (std::size_t b = 0; b < kProfileBins; ++b) mean[b] += p[b];
    }
    for (double& v : mean) v /= static_cast<double>(n_samples);
    out.mean_profiles.push_back(mean);
  }
  const ChannelArray& reference =
      out.mean_profiles[static_cast<std::size_t>(zero - offsets.begin())];
  for (const auto& mean : out.mean_profiles) {
    ChannelArray delta{};
    for (std::size_t b = 0; b < kProfileBins; ++b) delta[b] = mean[b] - reference[b];
    out.delta_profiles.push_back(delta);
  }
  return out;
}

std::size_t dominant_depth_bin(const ProbeResult& probe) {
  ChannelArray total{};
  for (const auto& delta : probe.delta_profiles) {
    for (std::size_t b = 0; b < kProfileBins; ++b) total[b] += std::abs(delta[b]);
  }
  return static_cast<std::size_t>(std::max_element(total.begin(), total.end()) - total.begin());
}

}  // namespace latentcpt
