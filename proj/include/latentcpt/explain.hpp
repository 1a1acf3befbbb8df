#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "latentcpt/autoencoder.hpp"
#include "latentcpt/gbdt.hpp"

namespace latentcpt {

// Margin-space Shapley attribution of one prediction.
struct ShapAttribution {
  double base_value = 0.0;  // mean background margin
  std::vector<double> values;
  std::vector<std::string> feature_names;
};

/// Exact interventional Shapley values: for each background row the tree is
/// walked once, branching only where x and the background row disagree, and
/// every reachable leaf credits its value to the features that route to it.
/// Throws EmptyBackground or DimensionMismatch.
ShapAttribution tree_shap(const TreeEnsemble& ensemble, std::span<const double> x,
                          const Eigen::MatrixXd& background);

/// Seeded subsample of at most `cap` rows (all rows, in order, when fewer).
Eigen::MatrixXd select_background(const Eigen::MatrixXd& rows, std::size_t cap,
                                  std::uint64_t seed);

struct FeatureImportance {
  std::string name;
  std::size_t index = 0;
  double mean_abs_shap = 0.0;
};

struct BeeswarmPoint {
  std::size_t row = 0;
  std::size_t feature = 0;
  double feature_value = 0.0;
  double shap_value = 0.0;
};

struct GlobalExplanation {
  std::vector<std::string> feature_names;
  double base_value = 0.0;
  Eigen::MatrixXd shap_values;     // rows x features
  Eigen::MatrixXd feature_values;  // rows x features
  std::vector<FeatureImportance> ranking;  // every feature, mean |SHAP| descending
  std::size_t top_k = 15;
  double remainder = 0.0;          // summed mean |SHAP| of features ranked past top_k
  std::size_t remainder_count = 0;

  std::vector<BeeswarmPoint> beeswarm() const;
  std::size_t feature_index(const std::string& name) const;  // throws UnknownFeature
};

GlobalExplanation global_explanation(const TreeEnsemble& ensemble, const Eigen::MatrixXd& rows,
                                     const Eigen::MatrixXd& background, std::size_t top_k = 15);

struct DependencyRow {
  double x = 0.0;      // value of the explained feature
  double shap = 0.0;   // its attribution
  double color = 0.0;  // value of the colouring feature
};

std::vector<DependencyRow> dependency_data(const GlobalExplanation& explanation,
                                           const std::string& feature,
                                           const std::string& color_feature);

struct RegionSelection {
  std::vector<std::size_t> indices;  // rows of the latent table inside [lo, hi]
  std::vector<ChannelArray> profiles;

  std::size_t count() const { return indices.size(); }
};

/// Decodes every latent vector whose coordinate k lies in [lo, hi].
RegionSelection region_reconstruct(const AutoencoderModel& model,
                                   std::span<const LatentVector> latents, std::size_t k,
                                   double lo, double hi);

struct ProbeResult {
  std::size_t latent_index = 0;
  std::size_t n_samples = 0;
  std::uint64_t seed = 0;
  std::vector<double> offsets;
  std::vector<ChannelArray> mean_profiles;   // one per offset
  std::vector<ChannelArray> delta_profiles;  // mean profile minus the offset-0 profile
};

std::vector<double> default_probe_offsets();  // -4 to +4 in steps of 0.5

/// Sets latent coordinate k to each offset while the other coordinates are
/// bootstrapped independently from their empirical values. The same draws are
/// reused for every offset, so delta at offset 0 is exactly zero.
ProbeResult perturbation_probe(const AutoencoderModel& model,
                               std::span<const LatentVector> latents, std::size_t k,
                               std::span<const double> offsets, std::size_t n_samples,
                               std::uint64_t seed);

/// Depth bin with the largest |delta| summed over all offsets.
std::size_t dominant_depth_bin(const ProbeResult& probe);

}  // namespace latentcpt
