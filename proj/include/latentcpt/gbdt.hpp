#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "latentcpt/autoencoder.hpp"
#include "latentcpt/data.hpp"

namespace latentcpt {

// Feature groups: A = site parameters (5), B = A + 4-m window std/median (9),
// C = A + 1-m averages (25), D = A + autoencoder latents (25).
enum class FeatureVariant { A, B, C, D };

char variant_letter(FeatureVariant variant);
FeatureVariant parse_variant(const std::string& letter);
std::vector<std::string> feature_names(FeatureVariant variant);

// ic latents followed by qc1ncs latents.
using LatentPair = std::array<double, 2 * kLatentDim>;

/// Feature vector in the order of feature_names(variant). Pass nullptr for
/// inputs the variant does not need; a missing required input throws
/// MissingInput.
std::vector<double> assemble_features(FeatureVariant variant, const SiteRecord& site,
                                      const RegularProfile* profile, const LatentPair* latents);

struct LabeledData {
  Eigen::MatrixXd features;  // rows are samples
  std::vector<int> labels;
  std::vector<std::string> feature_names;

  std::size_t size() const { return labels.size(); }
};

void check_labeled(const LabeledData& data);

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;  // x < threshold goes left
  int left = -1;
  int right = -1;
  bool default_left = true;  // reserved for missing values; unused
  double weight = 0.0;       // leaf value in margin units, before shrinkage
  double cover = 0.0;        // sum of hessians reaching the node
  double gain = 0.0;         // split gain for internal nodes

  bool is_leaf() const { return feature < 0; }
};

struct RegressionTree {
  std::vector<TreeNode> nodes;  // nodes[0] is the root

  int leaf_index(std::span<const double> x) const;
  double leaf_value(std::span<const double> x) const { return nodes[leaf_index(x)].weight; }
  int depth() const;
};

struct TreeEnsemble {
  double base_score = 0.0;
  double shrinkage = 1.0;
  std::vector<std::string> feature_names;
  std::vector<RegressionTree> trees;

  std::size_t n_features() const { return feature_names.size(); }
};

/// Structural checks: child links, feature indices, finite values, cover > 0.
void check_ensemble(const TreeEnsemble& ensemble);

/// base_score + shrinkage * sum of reached leaf weights.
double predict_margin(const TreeEnsemble& ensemble, std::span<const double> x);
double predict_proba(const TreeEnsemble& ensemble, std::span<const double> x);
int predict_label(const TreeEnsemble& ensemble, std::span<const double> x);
std::vector<int> predict_labels(const TreeEnsemble& ensemble, const Eigen::MatrixXd& rows);

double sigmoid(double margin);

struct GbdtConfig {
  int max_depth = 11;
  std::size_t early_stopping_rounds = 5;
  std::size_t max_estimators = 100;
  double learning_rate = 0.3;
  double l2_lambda = 1.0;
  double min_child_weight = 1.0;
  double min_split_gain = 0.0;
  std::uint64_t seed = 0;  // recorded for provenance; training has no random steps
};

void validate(const GbdtConfig& cfg);

/// One second-order regression tree over the given rows by exact greedy
/// split search. Equal gains keep the lowest feature, then lowest threshold.
RegressionTree fit_tree(const Eigen::MatrixXd& features, std::span<const double> grad,
                        std::span<const double> hess, std::span<const int> rows,
                        const GbdtConfig& cfg);

struct GbdtTrainResult {
  TreeEnsemble ensemble;              // truncated at best_round
  std::vector<double> val_accuracy;   // after each round, index = round
  std::size_t best_round = 0;
  std::size_t rounds_run = 0;
};

/// Logistic boosting with early stopping on validation accuracy at 0.5.
/// Only strict improvements move the best round.
GbdtTrainResult train_gbdt(const LabeledData& train, const LabeledData& val,
                           const GbdtConfig& cfg);

}  // namespace latentcpt
