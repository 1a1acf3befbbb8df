#pragma once

// Shared fixtures and independent oracles for the unit and acceptance tests.

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "latentcpt/gbdt.hpp"
#include "latentcpt/random.hpp"

namespace latentcpt::testing {

inline std::filesystem::path scratch_dir(const std::string& name) {
  const auto dir = std::filesystem::temp_directory_path() / ("latentcpt_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Plain tree walk, written separately from RegressionTree::leaf_index.
inline double walk(const RegressionTree& tree, const std::vector<double>& x) {
  std::size_t id = 0;
  while (tree.nodes[id].feature >= 0) {
    const TreeNode& n = tree.nodes[id];
    id = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] < n.threshold ? n.left
                                                                                       : n.right);
  }
  return tree.nodes[id].weight;
}

inline double oracle_margin(const TreeEnsemble& e, const std::vector<double>& x) {
  double sum = 0.0;
  for (const auto& t : e.trees) sum += walk(t, x);
  return e.base_score + e.shrinkage * sum;
}

// Interventional Shapley values by enumerating all 2^m coalitions:
// v(S) = mean over background rows r of f(x on S, r elsewhere).
inline std::vector<double> brute_force_shap(const TreeEnsemble& e, const std::vector<double>& x,
                                            const Eigen::MatrixXd& background) {
  const std::size_t m = x.size();
  const std::size_t subsets = std::size_t{1} << m;
  std::vector<double> value(subsets, 0.0);
  for (std::size_t s = 0; s < subsets; ++s) {
    double total = 0.0;
    for (Eigen::Index r = 0; r < background.rows(); ++r) {
      std::vector<double> z(m);
      for (std::size_t j = 0; j < m; ++j) {
        z[j] = (s >> j) & 1U ? x[j] : background(r, static_cast<Eigen::Index>(j));
      }
      total += oracle_margin(e, z);
    }
    value[s] = total / static_cast<double>(background.rows());
  }
  std::vector<double> fact(m + 1, 1.0);
  for (std::size_t i = 1; i <= m; ++i) fact[i] = fact[i - 1] * static_cast<double>(i);
  std::vector<double> phi(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t s = 0; s < subsets; ++s) {
      if ((s >> i) & 1U) continue;
      const auto size = static_cast<std::size_t>(__builtin_popcountll(s));
      const double w = fact[size] * fact[m - size - 1] / fact[m];
      phi[i] += w * (value[s | (std::size_t{1} << i)] - value[s]);
    }
  }
  return phi;
}

// Random tree with children stored after their parent. Thresholds come from
// a small grid so that rows frequently tie with them.
inline void grow(RegressionTree& tree, int id, int depth, int max_depth, std::size_t m, Rng& rng) {
  if (depth >= max_depth || rng.uniform() < 0.25) {
    tree.nodes[static_cast<std::size_t>(id)].weight = rng.uniform(-2.0, 2.0);
    return;
  }
  const int left = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  tree.nodes.emplace_back();
  TreeNode& n = tree.nodes[static_cast<std::size_t>(id)];
  n.feature = static_cast<int>(rng.index(m));
  n.threshold = 0.25 * static_cast<double>(1 + rng.index(3));
  n.left = left;
  n.right = left + 1;
  n.cover = 1.0;
  grow(tree, left, depth + 1, max_depth, m, rng);
  grow(tree, left + 1, depth + 1, max_depth, m, rng);
}

inline TreeEnsemble random_ensemble(std::size_t m, std::size_t n_trees, int max_depth, Rng& rng) {
  TreeEnsemble e;
  e.base_score = rng.uniform(-1.0, 1.0);
  e.shrinkage = rng.uniform(0.1, 1.0);
  for (std::size_t j = 0; j < m; ++j) e.feature_names.push_back("f" + std::to_string(j));
  for (std::size_t t = 0; t < n_trees; ++t) {
    RegressionTree tree;
    tree.nodes.emplace_back();
    tree.nodes[0].cover = 1.0;
    grow(tree, 0, 0, max_depth, m, rng);
    for (auto& n : tree.nodes) n.cover = 1.0;
    e.trees.push_back(std::move(tree));
  }
  return e;
}

// Values on a quarter grid so that they can coincide with thresholds.
inline Eigen::MatrixXd random_rows(std::size_t n, std::size_t m, Rng& rng) {
  Eigen::MatrixXd rows(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(m));
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    for (Eigen::Index j = 0; j < rows.cols(); ++j) rows(i, j) = 0.25 * static_cast<double>(rng.index(5));
  }
  return rows;
}

inline std::vector<double> row_of(const Eigen::MatrixXd& m, Eigen::Index i) {
  std::vector<double> out(static_cast<std::size_t>(m.cols()));
  for (Eigen::Index j = 0; j < m.cols(); ++j) out[static_cast<std::size_t>(j)] = m(i, j);
  return out;
}

inline TreeNode leaf(double w) {
  TreeNode n;
  n.weight = w;
  n.cover = 1.0;
  return n;
}

inline TreeNode split(int feature, double threshold, int left, int right) {
  TreeNode n;
  n.feature = feature;
  n.threshold = threshold;
  n.left = left;
  n.right = right;
  n.cover = 1.0;
  return n;
}

}  // namespace latentcpt::testing
