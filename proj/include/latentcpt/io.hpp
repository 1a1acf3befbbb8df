#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "latentcpt/autoencoder.hpp"
#include "latentcpt/data.hpp"
#include "latentcpt/gbdt.hpp"
#include "latentcpt/metrics.hpp"

namespace latentcpt {

inline constexpr const char* kAutoencoderFormat = "latentcpt.autoencoder/1";
inline constexpr const char* kEnsembleFormat = "latentcpt.gbdt/1";

// Stamp written into every artifact. CSV files carry it as a leading
// `# config_hash=... seed=...` comment line, JSON files as a "provenance" object.
struct Provenance {
  std::string config_hash;
  std::uint64_t seed = 0;
};

std::string provenance_comment(const Provenance& p);
nlohmann::json provenance_json(const Provenance& p);

// Minimal CSV table: lines starting with '#' and blank lines are skipped.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  std::size_t column(const std::string& name) const;  // throws FormatError
};

CsvTable read_csv(const std::filesystem::path& path);
double parse_double(const std::string& text);
std::string format_double(double value);  // shortest round-trip form

std::string read_text(const std::filesystem::path& path);
/// Writes through a temporary file and renames, so readers never see a partial file.
void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const nlohmann::json& doc);

// Profile CSV: site_id,depth_m,ic,qc1ncs. Sites keep first-appearance order.
std::vector<RawCptSamples> read_profile_csv(const std::filesystem::path& path);
void write_profile_csv(const std::filesystem::path& path, const std::vector<RawCptSamples>& profiles,
                       const std::optional<Provenance>& provenance = std::nullopt);

// Site CSV: site_id,pga_g,gwd_m,l_m,slope_pct,elev_m,label.
std::vector<SiteRecord> read_site_csv(const std::filesystem::path& path);
void write_site_csv(const std::filesystem::path& path, const std::vector<SiteRecord>& sites,
                    const std::optional<Provenance>& provenance = std::nullopt);

// Regularized profiles: site_id,channel,b0..b199 with one row per channel.
std::vector<RegularProfile> read_regular_csv(const std::filesystem::path& path);
void write_regular_csv(const std::filesystem::path& path, const std::vector<RegularProfile>& profiles,
                       const std::optional<Provenance>& provenance = std::nullopt);

// Split manifest: {"train": [...], "val": [...], "test": [...], "seed": n}.
nlohmann::json split_to_json(const DatasetSplit& split);
DatasetSplit split_from_json(const nlohmann::json& doc);

nlohmann::json autoencoder_to_json(const AutoencoderModel& model);
AutoencoderModel autoencoder_from_json(const nlohmann::json& doc);

nlohmann::json ensemble_to_json(const TreeEnsemble& ensemble);
TreeEnsemble ensemble_from_json(const nlohmann::json& doc);

nlohmann::json metrics_to_json(const ConfusionMatrix& cm, const ClassificationMetrics& m);

// Latent table: site_id,I_c0..I_c9,q_c0..q_c9.
struct LatentRow {
  std::string site_id;
  LatentPair values{};
};
std::vector<std::string> latent_table_header();
std::vector<LatentRow> read_latent_csv(const std::filesystem::path& path);
void write_latent_csv(const std::filesystem::path& path, const std::vector<LatentRow>& rows,
                      const std::optional<Provenance>& provenance = std::nullopt);

void write_history_csv(const std::filesystem::path& path, const std::vector<EpochRecord>& history,
                       const std::optional<Provenance>& provenance = std::nullopt);

}  // namespace latentcpt
