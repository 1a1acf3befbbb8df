#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace latentcpt {

inline constexpr std::size_t kProfileBins = 200;
inline constexpr std::size_t kProfileRows = 10;  // one row per meter
inline constexpr std::size_t kProfileCols = 20;  // 5 cm bins per meter
inline constexpr double kBinWidth = 0.05;        // meters
inline constexpr double kProfileDepth = 10.0;    // meters

using ChannelArray = std::array<double, kProfileBins>;
using ProfileMatrix = Eigen::Matrix<double, static_cast<int>(kProfileRows),
                                    static_cast<int>(kProfileCols), Eigen::RowMajor>;

enum class Channel { Ic, Qc1ncs };

std::string channel_name(Channel channel);      // "ic" / "qc1ncs"
Channel parse_channel(const std::string& name);  // throws InvalidInput

struct CptSample {
  double depth = 0.0;  // meters below ground surface
  double ic = 0.0;
  double qc1ncs = 0.0;
};

struct RawCptSamples {
  std::string site_id;
  std::vector<CptSample> samples;
};

// One site's profile on the fixed 5 cm grid; bin k covers [0.05k, 0.05(k+1)) m.
struct RegularProfile {
  std::string site_id;
  ChannelArray ic{};
  ChannelArray qc1ncs{};

  const ChannelArray& channel(Channel which) const {
    return which == Channel::Ic ? ic : qc1ncs;
  }
};

struct SiteRecord {
  std::string site_id;
  double pga = 0.0;        // g
  double gwd = 0.0;        // m
  double l_river = 0.0;    // m
  double slope = 0.0;      // percent grade
  double elevation = 0.0;  // m
  int label = 0;           // 1 = lateral spreading observed
};

struct DatasetSplit {
  std::vector<std::string> train;
  std::vector<std::string> val;
  std::vector<std::string> test;
  std::uint64_t seed = 0;
};

struct JoinedRow {
  RegularProfile profile;
  SiteRecord site;
};

struct JoinResult {
  std::vector<JoinedRow> rows;  // sorted by site_id
  std::vector<std::string> unmatched_profiles;
  std::vector<std::string> unmatched_sites;
};

struct SyntheticCorpus {
  std::vector<RawCptSamples> profiles;
  std::vector<SiteRecord> sites;
};

// Bin index of a depth on the 5 cm grid. Depths within 1e-9 of a bin
// boundary snap to the upper bin so decimal inputs such as 0.15 land in bin 3.
std::ptrdiff_t depth_bin(double depth);

/// Average raw samples into 200 bins over [0, 10) m. Samples at or below
/// 10 m are ignored. Throws EmptyBin when a bin receives no sample and
/// NonPositiveValue / InvalidInput on malformed samples.
RegularProfile regularize_profile(const RawCptSamples& raw);

/// Validates a profile built elsewhere (e.g. read back from disk).
void check_regular_profile(const RegularProfile& profile);

ProfileMatrix reshape_channel(std::span<const double> values);
ChannelArray flatten(const ProfileMatrix& matrix);

/// Seeded 70:15:15 split. Ids are sorted before shuffling, so the result
/// depends only on the id set and the seed.
DatasetSplit split_dataset(std::vector<std::string> ids, std::uint64_t seed);

JoinResult join_datasets(const std::vector<RegularProfile>& profiles,
                         const std::vector<SiteRecord>& sites);

/// [std(ic), median(ic), std(qc1ncs), median(qc1ncs)] over the bins whose
/// top lies in [gwd, gwd + 4) m, clipped at 10 m. Population std; the median
/// of an even-length window averages the two central values.
std::array<double, 4> std_median_features(const RegularProfile& profile, double gwd);

/// Ten per-meter ic means followed by ten per-meter qc1ncs means.
std::array<double, 2 * kProfileRows> one_meter_averages(const RegularProfile& profile);

/// Layered-earth synthetic corpus; deterministic in (n_sites, seed). See
/// synth_constants.hpp for the generator and label-rule constants.
SyntheticCorpus synth_corpus(std::size_t n_sites, std::uint64_t seed);

/// Population statistics used by the baseline features.
double population_std(std::span<const double> values);
double median(std::span<const double> values);

}  // namespace latentcpt
