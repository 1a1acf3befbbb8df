#include "latentcpt/data.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <set>
#include <unordered_map>

#include "latentcpt/error.hpp"
#include "latentcpt/random.hpp"
#include "latentcpt/synth_constants.hpp"

namespace latentcpt {

namespace {

constexpr double kBoundarySnap = 1e-9;

std::string bin_message(std::size_t bin) {
  return "bin " + std::to_string(bin) + " (depth " + std::to_string(bin * kBinWidth) +
         " m) has no sample";
}

void check_unique(const std::vector<std::string>& ids, const char* what) {
  std::set<std::string> seen;
  for (const auto& id : ids) {
    if (!seen.insert(id).second) {
      throw Error(ErrorKind::DuplicateId, std::string("duplicate ") + what + " id '" + id + "'");
    }
  }
}

}  // namespace

std::string channel_name(Channel channel) {
  return channel == Channel::Ic ? "ic" : "qc1ncs";
}

Channel parse_channel(const std::string& name) {
  if (name == "ic") return Channel::Ic;
  if (name == "qc1ncs") return Channel::Qc1ncs;
  throw Error(ErrorKind::InvalidInput, "unknown channel '" + name + "'");
}

std::ptrdiff_t depth_bin(double depth) {
  return static_cast<std::ptrdiff_t>(std::floor(depth / kBinWidth + kBoundarySnap));
}

RegularProfile regularize_profile(const RawCptSamples& raw) {
  ChannelArray ic_sum{};
  ChannelArray qc_sum{};
  std::array<std::size_t, kProfileBins> counts{};

  double previous = -1.0;
  for (const auto& s : raw.samples) {
    if (!std::isfinite(s.depth) || !std::isfinite(s.ic) || !std::isfinite(s.qc1ncs)) {
      throw Error(ErrorKind::InvalidInput, "site '" + raw.site_id + "': non-finite sample");
    }
    if (s.depth < 0.0 || s.depth <= previous) {
      throw Error(ErrorKind::InvalidInput,
                  "site '" + raw.site_id + "': depths must be non-negative and strictly increasing");
    }
    previous = s.depth;
    if (s.ic <= 0.0 || s.qc1ncs <= 0.0) {
      throw Error(ErrorKind::NonPositiveValue,
                  "site '" + raw.site_id + "': non-positive value at depth " +
                      std::to_string(s.depth));
    }
    const auto bin = depth_bin(s.depth);
    if (bin >= static_cast<std::ptrdiff_t>(kProfileBins)) continue;
    ic_sum[static_cast<std::size_t>(bin)] += s.ic;
    qc_sum[static_cast<std::size_t>(bin)] += s.qc1ncs;
    ++counts[static_cast<std::size_t>(bin)];
  }

  RegularProfile out;
  out.site_id = raw.site_id;
  for (std::size_t k = 0; k < kProfileBins; ++k) {
    if (counts[k] == 0) {
      throw Error(ErrorKind::EmptyBin, "site '" + raw.site_id + "': " + bin_message(k));
    }
    out.ic[k] = ic_sum[k] / static_cast<double>(counts[k]);
    out.qc1ncs[k] = qc_sum[k] / static_cast<double>(counts[k]);
  }
  return out;
}

void check_regular_profile(const RegularProfile& profile) {
  for (std::size_t k = 0; k < kProfileBins; ++k) {
    for (double v : {profile.ic[k], profile.qc1ncs[k]}) {
      if (!std::isfinite(v)) {
        throw Error(ErrorKind::NonFiniteInput, "site '" + profile.site_id + "': non-finite bin");
      }
      if (v <= 0.0) {
        throw Error(ErrorKind::NonPositiveValue,
                    "site '" + profile.site_id + "': non-positive bin " + std::to_string(k));
      }
    }
  }
}

ProfileMatrix reshape_channel(std::span<const double> values) {
  if (values.size() != kProfileBins) {
    throw Error(ErrorKind::LengthMismatch,
                "expected 200 values, got " + std::to_string(values.size()));
  }
  ProfileMatrix m;
  for (std::size_t r = 0; r < kProfileRows; ++r) {
    for (std::size_t c = 0; c < kProfileCols; ++c) {
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = values[kProfileCols * r + c];
    }
  }
  return m;
}

ChannelArray flatten(const ProfileMatrix& matrix) {
  ChannelArray out{};
  for (std::size_t r = 0; r < kProfileRows; ++r) {
    for (std::size_t c = 0; c < kProfileCols; ++c) {
      out[kProfileCols * r + c] =
          matrix(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c));
    }
  }
  return out;
}

DatasetSplit split_dataset(std::vector<std::string> ids, std::uint64_t seed) {
  if (ids.size() < 10) {
    throw Error(ErrorKind::TooFewItems,
                "split needs at least 10 ids, got " + std::to_string(ids.size()));
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
    throw Error(ErrorKind::DuplicateId, "duplicate id in split input");
  }
  Rng rng(seed);
  rng.shuffle(ids);

  const std::size_t n = ids.size();
  const std::size_t n_train = (n * 70) / 100;
  const std::size_t n_val = (n * 15) / 100;

  DatasetSplit split;
  split.seed = seed;
  auto first = ids.begin();
  split.train.assign(first, first + static_cast<std::ptrdiff_t>(n_train));
  split.val.assign(first + static_cast<std::ptrdiff_t>(n_train),
                   first + static_cast<std::ptrdiff_t>(n_train + n_val));
  split.test.assign(first + static_cast<std::ptrdiff_t>(n_train + n_val), ids.end());
  return split;
}

JoinResult join_datasets(const std::vector<RegularProfile>& profiles,
                         const std::vector<SiteRecord>& sites) {
  std::vector<std::string> profile_ids;
  std::vector<std::string> site_ids;
  profile_ids.reserve(profiles.size());
  site_ids.reserve(sites.size());
  for (const auto& p : profiles) profile_ids.push_back(p.site_id);
  for (const auto& s : sites) site_ids.push_back(s.site_id);
  check_unique(profile_ids, "profile");
  check_unique(site_ids, "site");

  std::unordered_map<std::string, const SiteRecord*> by_id;
  for (const auto& s : sites) by_id.emplace(s.site_id, &s);

  JoinResult result;
  std::set<std::string> matched;
  for (const auto& p : profiles) {
    auto it = by_id.find(p.site_id);
    if (it == by_id.end()) {
      result.unmatched_profiles.push_back(p.site_id);
      continue;
    }
    result.rows.push_back({p, *it->second});
    matched.insert(p.site_id);
  }
  for (const auto& s : sites) {
    if (!matched.contains(s.site_id)) result.unmatched_sites.push_back(s.site_id);
  }
  std::sort(result.rows.begin(), result.rows.end(),
            [](const JoinedRow& a, const JoinedRow& b) { return a.site.site_id < b.site.site_id; });
  std::sort(result.unmatched_profiles.begin(), result.unmatched_profiles.end());
  std::sort(result.unmatched_sites.begin(), result.unmatched_sites.end());
  return result;
}

double population_std(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::InvalidInput, "std of empty window");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return std::sqrt(ss / n);
}

double median(std::span<const double> values) {
  if (values.empty()) throw Error(ErrorKind::InvalidInput, "median of empty window");
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  const std::size_t n = sorted.size();
  if (n % 2 == 1) return sorted[n / 2];
  return 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
}

std::array<double, 4> std_median_features(const RegularProfile& profile, double gwd) {
  constexpr std::size_t kWindowBins = 80;  // 4 m
  constexpr std::size_t kMinWindowBins = 20;
  if (!std::isfinite(gwd) || gwd < 0.0 || gwd >= kProfileDepth) {
    throw Error(ErrorKind::WindowOutOfRange,
                "groundwater depth " + std::to_string(gwd) + " m leaves no 10 m window");
  }
  const auto first =
      static_cast<std::size_t>(std::ceil(gwd / kBinWidth - kBoundarySnap));
  const std::size_t end = std::min(first + kWindowBins, kProfileBins);
  if (first >= end || end - first < kMinWindowBins) {
    throw Error(ErrorKind::WindowOutOfRange,
                "window below " + std::to_string(gwd) + " m has fewer than 20 bins");
  }
  const std::span<const double> ic(profile.ic.data() + first, end - first);
  const std::span<const double> qc(profile.qc1ncs.data() + first, end - first);
  return {population_std(ic), median(ic), population_std(qc), median(qc)};
}

std::array<double, 2 * kProfileRows> one_meter_averages(const RegularProfile& profile) {
  std::array<double, 2 * kProfileRows> out{};
  for (std::size_t r = 0; r < kProfileRows; ++r) {
    double ic = 0.0;
    double qc = 0.0;
    for (std::size_t c = 0; c < kProfileCols; ++c) {
      ic += profile.ic[kProfileCols * r + c];
      qc += profile.qc1ncs[kProfileCols * r + c];
    }
    out[r] = ic / static_cast<double>(kProfileCols);
    out[kProfileRows + r] = qc / static_cast<double>(kProfileCols);
  }
  return out;
}

namespace {

struct SynthSite {
  RawCptSamples raw;
  SiteRecord site;
};

SynthSite synth_one(std::size_t index, std::uint64_t seed) {
  using namespace synth;
  Rng rng(derive_seed(seed, index));

  const int n_layers = kMinLayers + static_cast<int>(rng.index(kMaxLayers - kMinLayers + 1));
  std::vector<double> interfaces;
  for (int i = 0; i + 1 < n_layers; ++i) {
    interfaces.push_back(rng.uniform(kInterfaceMin, kInterfaceMax));
  }
  std::sort(interfaces.begin(), interfaces.end());

  std::vector<double> layer_ic(static_cast<std::size_t>(n_layers));
  std::vector<double> layer_qc(static_cast<std::size_t>(n_layers));
  for (int i = 0; i < n_layers; ++i) {
    const double ic = rng.uniform(kIcMin, kIcMax);
    // Sand-like (low ic) layers resist more; log-linear trend plus scatter.
    double t = (kIcMax - ic) / (kIcMax - kIcMin) + kQcScatter * rng.normal();
    t = std::clamp(t, 0.0, 1.0);
    layer_ic[static_cast<std::size_t>(i)] = ic;
    layer_qc[static_cast<std::size_t>(i)] = kQcMin * std::pow(kQcMax / kQcMin, t);
  }
  auto layer_at = [&](double depth) {
    return static_cast<std::size_t>(
        std::upper_bound(interfaces.begin(), interfaces.end(), depth) - interfaces.begin());
  };

  const int spacing_cm = 1 + static_cast<int>(rng.index(2));
  const double innovation = std::sqrt(1.0 - kNoiseRho * kNoiseRho);
  double ic_noise = kIcNoiseSigma * rng.normal();
  double qc_noise = kQcLogNoiseSigma * rng.normal();

  SynthSite out;
  char id[16];
  std::snprintf(id, sizeof id, "S%05zu", index + 1);
  out.raw.site_id = id;

  double soil_sum = 0.0;
  int soil_count = 0;
  for (int cm = 0; cm <= kMaxDepthCm; ++cm) {
    if (cm > 0) {
      ic_noise = kNoiseRho * ic_noise + innovation * kIcNoiseSigma * rng.normal();
      qc_noise = kNoiseRho * qc_noise + innovation * kQcLogNoiseSigma * rng.normal();
    }
    const double depth = cm / 100.0;
    const std::size_t layer = layer_at(depth);
    if (depth >= kSoilTop && depth < kSoilBottom) {
      soil_sum += layer_ic[layer];
      ++soil_count;
    }
    if (cm % spacing_cm != 0) continue;
    const double ic = std::max(kIcFloor, layer_ic[layer] + ic_noise);
    const double qc = layer_qc[layer] * std::exp(qc_noise);
    out.raw.samples.push_back({depth, ic, qc});
  }

  SiteRecord& s = out.site;
  s.site_id = out.raw.site_id;
  s.pga = rng.uniform(kPgaMin, kPgaMax);
  s.gwd = rng.uniform(kGwdMin, kGwdMax);
  s.l_river = rng.uniform(kLMin, kLMax);
  s.slope = rng.uniform(kSlopeMin, kSlopeMax);
  s.elevation = kElevBase + kElevPerGwd * s.gwd + rng.uniform(0.0, kElevSpread);

  const double soil = (kSoilPivot - soil_sum / soil_count) / kSoilScale;
  const double gate = 1.0 / (1.0 + std::exp((s.gwd - kGateGwd) / kGateWidth));
  const double score = kIntercept + kSoilWeight * soil * gate +
                       kPgaWeight * (s.pga - kPgaPivot) / kPgaScale -
                       kLWeight * std::log(s.l_river / kLPivot) -
                       kGwdWeight * (s.gwd - kGwdPivot) + kLabelNoise * rng.normal();
  s.label = score > 0.0 ? 1 : 0;
  return out;
}

}  // namespace

SyntheticCorpus synth_corpus(std::size_t n_sites, std::uint64_t seed) {
  if (n_sites == 0) throw Error(ErrorKind::InvalidInput, "synth_corpus needs n_sites >= 1");
  SyntheticCorpus corpus;
  corpus.profiles.reserve(n_sites);
  corpus.sites.reserve(n_sites);
  for (std::size_t i = 0; i < n_sites; ++i) {
    auto site = synth_one(i, seed);
    corpus.profiles.push_back(std::move(site.raw));
    corpus.sites.push_back(std::move(site.site));
  }
  return corpus;
}

}  // namespace latentcpt
