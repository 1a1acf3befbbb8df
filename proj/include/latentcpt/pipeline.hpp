#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latentcpt/autoencoder.hpp"
#include "latentcpt/data.hpp"
#include "latentcpt/gbdt.hpp"
#include "latentcpt/io.hpp"

namespace latentcpt {

struct RegionConfig {
  double lo = 0.0;
  double hi = 0.0;
};

struct ExplainConfig {
  std::string model = "D";
  std::string rows = "all";  // "all" joined rows or only the "test" split
  std::size_t background_cap = 256;
  std::uint64_t background_seed = 0;
  std::size_t top_k = 15;
  std::string dependency_feature = "auto";  // "auto": top-ranked I_c latent
  std::string color_feature = "GWD";
  std::string probe_latent = "auto";  // "auto" or an index 0..9
  std::vector<double> probe_offsets = {};
  std::size_t probe_samples = 100;
  std::uint64_t probe_seed = 1;
  std::vector<RegionConfig> regions;
};

struct PipelineConfig {
  std::filesystem::path config_dir;  // relative paths resolve against this
  std::optional<std::filesystem::path> profiles_csv;
  std::optional<std::filesystem::path> sites_csv;
  std::filesystem::path output_dir = "out";

  std::size_t synth_sites = 2000;
  std::uint64_t synth_seed = 42;

  std::uint64_t profile_split_seed = 42;
  std::uint64_t site_split_seed = 1;

  TrainConfig ae_ic;
  TrainConfig ae_qc;
  Architecture architecture;
  PosEncodingConfig pe;

  GbdtConfig gbdt;
  std::vector<FeatureVariant> models{FeatureVariant::A, FeatureVariant::B, FeatureVariant::C,
                                     FeatureVariant::D};
  std::size_t pca_components = 10;
  ExplainConfig explain;
};

/// Parses and validates a config document; throws ConfigError.
PipelineConfig config_from_json(const nlohmann::json& doc,
                                const std::filesystem::path& config_dir = {});
nlohmann::json config_to_json(const PipelineConfig& cfg);
PipelineConfig load_config(const std::filesystem::path& path);

/// FNV-1a 64 over the canonical JSON dump, as 16 hex digits.
std::string config_hash(const PipelineConfig& cfg);

inline const std::vector<std::string>& stage_names() {
  static const std::vector<std::string> names{"synth",      "prepare",  "train-ae",
                                              "encode",     "reconstruct-report",
                                              "train-clf",  "evaluate", "explain",
                                              "probe"};
  return names;
}

struct StageOverrides {
  std::optional<std::filesystem::path> output_dir;
  std::optional<std::uint64_t> seed;  // replaces the seed the stage consumes
};

/// Applies overrides: --seed replaces synth.seed for `synth`, both split
/// seeds for `prepare`, both autoencoder seeds for `train-ae`, gbdt.seed for
/// `train-clf`, the background seed for `explain` and the probe seed for
/// `probe`.
PipelineConfig apply_overrides(PipelineConfig cfg, const std::string& stage,
                               const StageOverrides& overrides);

/// Seed recorded in the provenance stamp of a stage's artifacts.
std::uint64_t stage_seed(const PipelineConfig& cfg, const std::string& stage);

/// Runs one stage; throws Error on failure.
void run_stage(const std::string& stage, const PipelineConfig& cfg);

/// Error JSON printed by the CLI on failure.
nlohmann::json error_json(const std::string& stage, const std::string& kind,
                          const std::string& message);

// Output locations under the configured output directory.
namespace artifacts {
std::filesystem::path synth_profiles(const PipelineConfig& cfg);
std::filesystem::path synth_sites(const PipelineConfig& cfg);
std::filesystem::path regular_profiles(const PipelineConfig& cfg);
std::filesystem::path profile_split(const PipelineConfig& cfg);
std::filesystem::path site_split(const PipelineConfig& cfg);
std::filesystem::path joined_sites(const PipelineConfig& cfg);
std::filesystem::path autoencoder(const PipelineConfig& cfg, Channel channel);
std::filesystem::path history(const PipelineConfig& cfg, Channel channel);
std::filesystem::path latents(const PipelineConfig& cfg);
std::filesystem::path reconstruction(const PipelineConfig& cfg);
std::filesystem::path reconstruction_summary(const PipelineConfig& cfg);
std::filesystem::path ensemble(const PipelineConfig& cfg, FeatureVariant variant);
std::filesystem::path rounds(const PipelineConfig& cfg, FeatureVariant variant);
std::filesystem::path evaluation(const PipelineConfig& cfg);
std::filesystem::path shap_values(const PipelineConfig& cfg);
std::filesystem::path shap_summary(const PipelineConfig& cfg);
std::filesystem::path dependency(const PipelineConfig& cfg);
std::filesystem::path probe(const PipelineConfig& cfg);
std::filesystem::path probe_summary(const PipelineConfig& cfg);
std::filesystem::path regions(const PipelineConfig& cfg);
}  // namespace artifacts

// In-memory helpers shared by the stages, the tests and the bindings.

using LatentTable = std::map<std::string, LatentPair>;

/// Rows of `joined` whose site ids are listed, in the order of `ids`.
LabeledData build_labeled(FeatureVariant variant, const std::vector<JoinedRow>& joined,
                          const std::vector<std::string>& ids, const LatentTable* latents);

/// Encodes both channels of every profile.
LatentTable encode_profiles(const AutoencoderModel& ic_model, const AutoencoderModel& qc_model,
                            const std::vector<RegularProfile>& profiles);

/// Regularizes every raw profile, collecting the inadmissible ones with reasons.
struct PreparedProfiles {
  std::vector<RegularProfile> profiles;
  std::vector<std::pair<std::string, std::string>> rejected;  // site id, error kind + message
};
PreparedProfiles prepare_profiles(const std::vector<RawCptSamples>& raw);

}  // namespace latentcpt
