#include "latentcpt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "latentcpt/error.hpp"
#include "latentcpt/explain.hpp"
#include "latentcpt/metrics.hpp"
#include "latentcpt/pca.hpp"
#include "latentcpt/synth_constants.hpp"

namespace latentcpt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& message) {
  throw Error(ErrorKind::ConfigError, message);
}

void check_keys(const json& obj, const std::string& section, const std::set<std::string>& allowed) {
  if (!obj.is_object()) config_error("'" + section + "' must be an object");
  for (const auto& [key, _] : obj.items()) {
    if (!allowed.contains(key)) config_error("unknown key '" + key + "' in '" + section + "'");
  }
}

const json& section(const json& doc, const std::string& name) {
  static const json empty = json::object();
  return doc.contains(name) ? doc.at(name) : empty;
}

template <typename T>
T get_or(const json& obj, const std::string& key, const T& fallback, const std::string& where) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception&) {
    config_error("'" + where + "." + key + "' has the wrong type");
  }
}

std::uint64_t require_seed(const json& obj, const std::string& key, const std::string& where) {
  if (!obj.contains(key)) config_error("seed '" + where + "." + key + "' must be set explicitly");
  const json& v = obj.at(key);
  if (!v.is_number_integer() || (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0)) {
    config_error("seed '" + where + "." + key + "' must be a non-negative integer");
  }
  return v.get<std::uint64_t>();
}

TrainConfig train_config_from(const json& obj, const std::string& where) {
  check_keys(obj, where,
             {"learning_rate", "batch_size", "max_epochs", "patience_epochs", "seed", "beta1",
              "beta2", "epsilon"});
  TrainConfig t;
  t.learning_rate = get_or(obj, "learning_rate", t.learning_rate, where);
  t.batch_size = get_or(obj, "batch_size", t.batch_size, where);
  t.max_epochs = get_or(obj, "max_epochs", t.max_epochs, where);
  t.patience_epochs = get_or(obj, "patience_epochs", t.patience_epochs, where);
  t.seed = require_seed(obj, "seed", where);
  t.beta1 = get_or(obj, "beta1", t.beta1, where);
  t.beta2 = get_or(obj, "beta2", t.beta2, where);
  t.epsilon = get_or(obj, "epsilon", t.epsilon, where);
  try {
    validate(t);
  } catch (const Error& e) {
    config_error(where + ": " + e.what());
  }
  return t;
}

json train_config_json(const TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"batch_size", t.batch_size},
          {"max_epochs", t.max_epochs},       {"patience_epochs", t.patience_epochs},
          {"seed", t.seed},                   {"beta1", t.beta1},
          {"beta2", t.beta2},                 {"epsilon", t.epsilon}};
}

fs::path resolve(const PipelineConfig& cfg, const fs::path& p) {
  return p.is_absolute() ? p : cfg.config_dir / p;
}

fs::path out_dir(const PipelineConfig& cfg) { return resolve(cfg, cfg.output_dir); }

void require_artifact(const fs::path& path, const std::string& producer) {
  if (!fs::exists(path)) {
    throw Error(ErrorKind::MissingArtifact,
                "missing artifact " + path.string() + " (run `" + producer + "` first)");
  }
}

Provenance provenance_for(const PipelineConfig& cfg, const std::string& stage) {
  return {config_hash(cfg), stage_seed(cfg, stage)};
}

json stamp(json doc, const PipelineConfig& cfg, const std::string& stage) {
  doc["provenance"] = provenance_json(provenance_for(cfg, stage));
  doc["provenance"]["stage"] = stage;
  return doc;
}

std::vector<std::string> ids_of(const std::vector<RegularProfile>& profiles) {
  std::vector<std::string> ids;
  for (const auto& p : profiles) ids.push_back(p.site_id);
  return ids;
}

std::vector<ChannelArray> channel_rows(const std::vector<RegularProfile>& profiles,
                                       const std::vector<std::string>& ids, Channel ch) {
  std::map<std::string, const RegularProfile*> by_id;
  for (const auto& p : profiles) by_id.emplace(p.site_id, &p);
  std::vector<ChannelArray> out;
  out.reserve(ids.size());
  for (const auto& id : ids) {
    auto it = by_id.find(id);
    if (it == by_id.end()) {
      throw Error(ErrorKind::MissingInput, "split lists unknown profile '" + id + "'");
    }
    out.push_back(it->second->channel(ch));
  }
  return out;
}

double quantile(std::vector<double> v, double q) {
  if (v.empty()) return std::nan("");
  std::sort(v.begin(), v.end());
  const double pos = q * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  return v[lo] + (pos - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

json distribution_json(const std::vector<double>& v) {
  if (v.empty()) return json{{"count", 0}};
  double mean = 0.0;
  for (double x : v) mean += x;
  mean /= static_cast<double>(v.size());
  return {{"count", v.size()},         {"mean", mean},
          {"min", quantile(v, 0.0)},   {"q05", quantile(v, 0.05)},
          {"q25", quantile(v, 0.25)},  {"median", quantile(v, 0.5)},
          {"q75", quantile(v, 0.75)},  {"q95", quantile(v, 0.95)},
          {"max", quantile(v, 1.0)}};
}

std::vector<JoinedRow> load_joined(const PipelineConfig& cfg) {
  require_artifact(artifacts::regular_profiles(cfg), "prepare");
  require_artifact(artifacts::joined_sites(cfg), "prepare");
  const auto profiles = read_regular_csv(artifacts::regular_profiles(cfg));
  const auto sites = read_site_csv(artifacts::joined_sites(cfg));
  return join_datasets(profiles, sites).rows;
}

LatentTable load_latent_table(const PipelineConfig& cfg) {
  require_artifact(artifacts::latents(cfg), "encode");
  LatentTable table;
  for (auto& row : read_latent_csv(artifacts::latents(cfg))) table.emplace(row.site_id, row.values);
  return table;
}

AutoencoderModel load_autoencoder(const PipelineConfig& cfg, Channel ch) {
  const fs::path path = artifacts::autoencoder(cfg, ch);
  require_artifact(path, "train-ae");
  return autoencoder_from_json(read_json(path));
}

TreeEnsemble load_ensemble(const PipelineConfig& cfg, FeatureVariant v) {
  const fs::path path = artifacts::ensemble(cfg, v);
  require_artifact(path, "train-clf");
  return ensemble_from_json(read_json(path));
}

bool needs_latents(const std::vector<FeatureVariant>& variants) {
  return std::find(variants.begin(), variants.end(), FeatureVariant::D) != variants.end();
}

// ---------------------------------------------------------------- stages

void stage_synth(const PipelineConfig& cfg) {
  const auto corpus = synth_corpus(cfg.synth_sites, cfg.synth_seed);
  const auto prov = provenance_for(cfg, "synth");
  write_profile_csv(artifacts::synth_profiles(cfg), corpus.profiles, prov);
  write_site_csv(artifacts::synth_sites(cfg), corpus.sites, prov);
  std::size_t positives = 0;
  for (const auto& s : corpus.sites) positives += static_cast<std::size_t>(s.label);
  write_json(out_dir(cfg) / "synth" / "synth_summary.json",
             stamp({{"generator", synth::kSynthVersion},
                    {"n_sites", corpus.sites.size()},
                    {"positives", positives},
                    {"base_rate", static_cast<double>(positives) /
                                      static_cast<double>(corpus.sites.size())}},
                   cfg, "synth"));
}

void stage_prepare(const PipelineConfig& cfg) {
  const fs::path profiles_path =
      cfg.profiles_csv ? resolve(cfg, *cfg.profiles_csv) : artifacts::synth_profiles(cfg);
  const fs::path sites_path =
      cfg.sites_csv ? resolve(cfg, *cfg.sites_csv) : artifacts::synth_sites(cfg);
  require_artifact(profiles_path, "synth");
  require_artifact(sites_path, "synth");

  const auto raw = read_profile_csv(profiles_path);
  const auto sites = read_site_csv(sites_path);
  const PreparedProfiles prepared = prepare_profiles(raw);
  const JoinResult joined = join_datasets(prepared.profiles, sites);

  const auto profile_split = split_dataset(ids_of(prepared.profiles), cfg.profile_split_seed);
  std::vector<std::string> joined_ids;
  std::vector<SiteRecord> joined_sites;
  for (const auto& row : joined.rows) {
    joined_ids.push_back(row.site.site_id);
    joined_sites.push_back(row.site);
  }
  const auto site_split = split_dataset(joined_ids, cfg.site_split_seed);

  const auto prov = provenance_for(cfg, "prepare");
  write_regular_csv(artifacts::regular_profiles(cfg), prepared.profiles, prov);
  write_site_csv(artifacts::joined_sites(cfg), joined_sites, prov);
  write_json(artifacts::profile_split(cfg), stamp(split_to_json(profile_split), cfg, "prepare"));
  write_json(artifacts::site_split(cfg), stamp(split_to_json(site_split), cfg, "prepare"));

  json rejected = json::array();
  for (const auto& [id, why] : prepared.rejected) rejected.push_back({{"site_id", id}, {"reason", why}});
  write_json(out_dir(cfg) / "prepare" / "prepare_report.json",
             stamp({{"raw_profiles", raw.size()},
                    {"admissible_profiles", prepared.profiles.size()},
                    {"rejected", rejected},
                    {"sites", sites.size()},
                    {"joined", joined.rows.size()},
                    {"unmatched_profiles", joined.unmatched_profiles},
                    {"unmatched_sites", joined.unmatched_sites}},
                   cfg, "prepare"));
}

void stage_train_ae(const PipelineConfig& cfg) {
  require_artifact(artifacts::regular_profiles(cfg), "prepare");
  require_artifact(artifacts::profile_split(cfg), "prepare");
  const auto profiles = read_regular_csv(artifacts::regular_profiles(cfg));
  const auto split = split_from_json(read_json(artifacts::profile_split(cfg)));

  json summary = json::object();
  for (Channel ch : {Channel::Ic, Channel::Qc1ncs}) {
    const TrainConfig& tc = ch == Channel::Ic ? cfg.ae_ic : cfg.ae_qc;
    const auto train = channel_rows(profiles, split.train, ch);
    const auto val = channel_rows(profiles, split.val, ch);
    const TrainResult result = train_autoencoder(train, val, ch, tc, cfg.architecture, cfg.pe);
    const Provenance prov{config_hash(cfg), tc.seed};
    json model = autoencoder_to_json(result.model);
    model["provenance"] = provenance_json(prov);
    write_json(artifacts::autoencoder(cfg, ch), model);
    write_history_csv(artifacts::history(cfg, ch), result.history, prov);
    summary[channel_name(ch)] = {
        {"epochs_run", result.history.size()},
        {"best_epoch", result.best_epoch},
        {"initial_val_mse", result.initial_val_mse},
        {"first_epoch_val_mse", result.history.front().val_mse},
        {"best_val_mse", result.history[result.best_epoch].val_mse},
        {"seed", tc.seed}};
  }
  write_json(out_dir(cfg) / "models" / "train_ae_summary.json", stamp(summary, cfg, "train-ae"));
}

void stage_encode(const PipelineConfig& cfg) {
  const AutoencoderModel ic = load_autoencoder(cfg, Channel::Ic);
  const AutoencoderModel qc = load_autoencoder(cfg, Channel::Qc1ncs);
  require_artifact(artifacts::regular_profiles(cfg), "prepare");
  const auto profiles = read_regular_csv(artifacts::regular_profiles(cfg));
  const LatentTable table = encode_profiles(ic, qc, profiles);
  std::vector<LatentRow> rows;
  for (const auto& p : profiles) rows.push_back({p.site_id, table.at(p.site_id)});
  write_latent_csv(artifacts::latents(cfg), rows, provenance_for(cfg, "encode"));
}

void stage_reconstruct_report(const PipelineConfig& cfg) {
  const AutoencoderModel ic = load_autoencoder(cfg, Channel::Ic);
  const AutoencoderModel qc = load_autoencoder(cfg, Channel::Qc1ncs);
  require_artifact(artifacts::regular_profiles(cfg), "prepare");
  require_artifact(artifacts::profile_split(cfg), "prepare");
  const auto profiles = read_regular_csv(artifacts::regular_profiles(cfg));
  const auto split = split_from_json(read_json(artifacts::profile_split(cfg)));

  std::map<Channel, PcaBasis> pca;
  for (Channel ch : {Channel::Ic, Channel::Qc1ncs}) {
    pca.emplace(ch, pca_fit(channel_rows(profiles, split.train, ch), cfg.pca_components));
  }

  std::ostringstream csv;
  csv << provenance_comment(provenance_for(cfg, "reconstruct-report")) << '\n'
      << "site_id,ic_rmse,ic_abs_log,qc1ncs_rmse,qc1ncs_abs_log,ic_pca_rmse,qc1ncs_pca_rmse\n";
  std::map<std::string, std::vector<double>> dist;
  std::size_t undefined_log = 0;
  std::map<std::string, const RegularProfile*> by_id;
  for (const auto& p : profiles) by_id.emplace(p.site_id, &p);

  for (const auto& id : split.test) {
    auto it = by_id.find(id);
    if (it == by_id.end()) throw Error(ErrorKind::MissingInput, "unknown profile '" + id + "'");
    csv << id;
    std::vector<double> pca_cols;
    for (Channel ch : {Channel::Ic, Channel::Qc1ncs}) {
      const AutoencoderModel& model = ch == Channel::Ic ? ic : qc;
      const ChannelArray& original = it->second->channel(ch);
      const ChannelArray recon = decode(model, encode(model, original));
      const double r = rmse(recon, original);
      dist[channel_name(ch) + "_rmse"].push_back(r);
      csv << ',' << format_double(r) << ',';
      if (std::all_of(recon.begin(), recon.end(), [](double v) { return v > 0.0; })) {
        const double l = abs_log_difference(recon, original);
        dist[channel_name(ch) + "_abs_log"].push_back(l);
        csv << format_double(l);
      } else {
        ++undefined_log;
      }
      const PcaBasis& basis = pca.at(ch);
      const Eigen::VectorXd back = pca_decode(basis, pca_encode(basis, original));
      const double pr = rmse(std::span<const double>(back.data(), static_cast<std::size_t>(back.size())),
                             original);
      dist[channel_name(ch) + "_pca_rmse"].push_back(pr);
      pca_cols.push_back(pr);
    }
    for (double v : pca_cols) csv << ',' << format_double(v);
    csv << '\n';
  }
  write_text(artifacts::reconstruction(cfg), csv.str());

  json summary = {{"profiles", split.test.size()},
                  {"pca_components", cfg.pca_components},
                  {"undefined_abs_log", undefined_log},
                  {"log_base", "e"}};
  for (const auto& [name, values] : dist) summary["distributions"][name] = distribution_json(values);
  write_json(artifacts::reconstruction_summary(cfg), stamp(summary, cfg, "reconstruct-report"));
}

void stage_train_clf(const PipelineConfig& cfg) {
  const auto joined = load_joined(cfg);
  require_artifact(artifacts::site_split(cfg), "prepare");
  const auto split = split_from_json(read_json(artifacts::site_split(cfg)));
  std::optional<LatentTable> latents;
  if (needs_latents(cfg.models)) latents = load_latent_table(cfg);

  json summary = json::object();
  for (FeatureVariant v : cfg.models) {
    const LatentTable* table = latents ? &*latents : nullptr;
    const LabeledData train = build_labeled(v, joined, split.train, table);
    const LabeledData val = build_labeled(v, joined, split.val, table);
    const GbdtTrainResult result = train_gbdt(train, val, cfg.gbdt);
    write_json(artifacts::ensemble(cfg, v),
               stamp(ensemble_to_json(result.ensemble), cfg, "train-clf"));

    std::ostringstream rounds;
    rounds << provenance_comment(provenance_for(cfg, "train-clf")) << '\n'
           << "round,val_accuracy\n";
    for (std::size_t r = 0; r < result.val_accuracy.size(); ++r) {
      rounds << r << ',' << format_double(result.val_accuracy[r]) << '\n';
    }
    write_text(artifacts::rounds(cfg, v), rounds.str());
    summary[std::string(1, variant_letter(v))] = {
        {"features", train.feature_names.size()},
        {"estimators", result.ensemble.trees.size()},
        {"best_round", result.best_round},
        {"rounds_run", result.rounds_run},
        {"best_val_accuracy", result.val_accuracy[result.best_round]}};
  }
  write_json(out_dir(cfg) / "models" / "train_clf_summary.json", stamp(summary, cfg, "train-clf"));
}

void stage_evaluate(const PipelineConfig& cfg) {
  const auto joined = load_joined(cfg);
  require_artifact(artifacts::site_split(cfg), "prepare");
  const auto split = split_from_json(read_json(artifacts::site_split(cfg)));
  std::optional<LatentTable> latents;
  if (needs_latents(cfg.models)) latents = load_latent_table(cfg);

  json report = {{"test_rows", split.test.size()}, {"threshold", 0.5}};
  report["models"] = json::object();
  for (FeatureVariant v : cfg.models) {
    const TreeEnsemble ensemble = load_ensemble(cfg, v);
    const LabeledData test = build_labeled(v, joined, split.test, latents ? &*latents : nullptr);
    if (test.feature_names != ensemble.feature_names) {
      throw Error(ErrorKind::DimensionMismatch,
                  std::string("model ") + variant_letter(v) + " features do not match its variant");
    }
    const auto predictions = predict_labels(ensemble, test.features);
    const ConfusionMatrix cm = confusion(test.labels, predictions);
    json entry = metrics_to_json(cm, metrics(cm));
    entry["estimators"] = ensemble.trees.size();
    report["models"][std::string(1, variant_letter(v))] = entry;
  }
  write_json(artifacts::evaluation(cfg), stamp(report, cfg, "evaluate"));
}

std::vector<std::string> explain_ids(const PipelineConfig& cfg, const DatasetSplit& split) {
  if (cfg.explain.rows == "test") return split.test;
  std::vector<std::string> ids = split.train;
  ids.insert(ids.end(), split.val.begin(), split.val.end());
  ids.insert(ids.end(), split.test.begin(), split.test.end());
  return ids;
}

std::string top_latent_name(const std::vector<FeatureImportance>& ranking) {
  for (const auto& f : ranking) {
    if (f.name.rfind("I_c", 0) == 0) return f.name;
  }
  return ranking.front().name;
}

void stage_explain(const PipelineConfig& cfg) {
  const FeatureVariant variant = parse_variant(cfg.explain.model);
  const TreeEnsemble ensemble = load_ensemble(cfg, variant);
  const auto joined = load_joined(cfg);
  require_artifact(artifacts::site_split(cfg), "prepare");
  const auto split = split_from_json(read_json(artifacts::site_split(cfg)));
  std::optional<LatentTable> latents;
  if (variant == FeatureVariant::D) latents = load_latent_table(cfg);
  const LatentTable* table = latents ? &*latents : nullptr;

  const std::vector<std::string> ids = explain_ids(cfg, split);
  const LabeledData data = build_labeled(variant, joined, ids, table);
  const LabeledData train = build_labeled(variant, joined, split.train, table);
  const Eigen::MatrixXd background =
      select_background(train.features, cfg.explain.background_cap, cfg.explain.background_seed);
  const GlobalExplanation g =
      global_explanation(ensemble, data.features, background, cfg.explain.top_k);

  const std::string feature = cfg.explain.dependency_feature == "auto"
                                  ? top_latent_name(g.ranking)
                                  : cfg.explain.dependency_feature;
  const auto dep = dependency_data(g, feature, cfg.explain.color_feature);

  const std::string comment = provenance_comment(provenance_for(cfg, "explain"));
  std::ostringstream shap_csv;
  shap_csv << comment << '\n' << "row_id,feature,feature_value,shap_value\n";
  for (const auto& p : g.beeswarm()) {
    shap_csv << ids[p.row] << ',' << g.feature_names[p.feature] << ','
             << format_double(p.feature_value) << ',' << format_double(p.shap_value) << '\n';
  }
  write_text(artifacts::shap_values(cfg), shap_csv.str());

  std::ostringstream dep_csv;
  dep_csv << comment << '\n' << "row_id,feature_value,shap_value,color_value\n";
  for (std::size_t i = 0; i < dep.size(); ++i) {
    dep_csv << ids[i] << ',' << format_double(dep[i].x) << ',' << format_double(dep[i].shap) << ','
            << format_double(dep[i].color) << '\n';
  }
  write_text(artifacts::dependency(cfg), dep_csv.str());

  json ranking = json::array();
  for (std::size_t r = 0; r < g.ranking.size(); ++r) {
    ranking.push_back({{"rank", r + 1},
                       {"feature", g.ranking[r].name},
                       {"mean_abs_shap", g.ranking[r].mean_abs_shap}});
  }
  write_json(artifacts::shap_summary(cfg),
             stamp({{"model", cfg.explain.model},
                    {"output_space", "margin"},
                    {"rows", ids.size()},
                    {"row_source", cfg.explain.rows},
                    {"base_value", g.base_value},
                    {"ranking", ranking},
                    {"top_k", g.top_k},
                    {"remainder", {{"features", g.remainder_count}, {"mean_abs_shap", g.remainder}}},
                    {"background",
                     {{"source", "train split"},
                      {"rows", background.rows()},
                      {"cap", cfg.explain.background_cap},
                      {"seed", cfg.explain.background_seed}}},
                    {"dependency", {{"feature", feature}, {"color", cfg.explain.color_feature}}}},
                   cfg, "explain"));
}

std::size_t probe_index(const PipelineConfig& cfg) {
  const std::string& spec = cfg.explain.probe_latent;
  std::string name = spec;
  if (spec == "auto") {
    require_artifact(artifacts::shap_summary(cfg), "explain");
    const json summary = read_json(artifacts::shap_summary(cfg));
    name.clear();
    for (const auto& entry : summary.at("ranking")) {
      const auto f = entry.at("feature").get<std::string>();
      if (f.rfind("I_c", 0) == 0) {
        name = f;
        break;
      }
    }
    if (name.empty()) {
      throw Error(ErrorKind::MissingInput, "explained model has no I_c latent to probe");
    }
  }
  const std::string digits = name.rfind("I_c", 0) == 0 ? name.substr(3) : name;
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) {
    config_error("explain.probe_latent must be 'auto', an index, or I_c<index>");
  }
  const std::size_t k = std::stoul(digits);
  if (k >= kLatentDim) throw Error(ErrorKind::IndexOutOfRange, "probe latent index must be < 10");
  return k;
}

void stage_probe(const PipelineConfig& cfg) {
  const AutoencoderModel ic = load_autoencoder(cfg, Channel::Ic);
  const LatentTable table = load_latent_table(cfg);
  const std::size_t k = probe_index(cfg);

  std::vector<LatentVector> ic_latents;
  std::vector<std::string> ids;
  for (const auto& [id, pair] : table) {
    LatentVector z{};
    std::copy(pair.begin(), pair.begin() + kLatentDim, z.begin());
    ic_latents.push_back(z);
    ids.push_back(id);
  }
  const std::vector<double> offsets =
      cfg.explain.probe_offsets.empty() ? default_probe_offsets() : cfg.explain.probe_offsets;
  const ProbeResult probe = perturbation_probe(ic, ic_latents, k, offsets,
                                               cfg.explain.probe_samples, cfg.explain.probe_seed);

  const std::string comment = provenance_comment(provenance_for(cfg, "probe"));
  std::ostringstream csv;
  csv << comment << '\n' << "offset,depth_m,delta_value\n";
  for (std::size_t o = 0; o < probe.offsets.size(); ++o) {
    for (std::size_t b = 0; b < kProfileBins; ++b) {
      csv << format_double(probe.offsets[o]) << ',' << format_double((b + 0.5) * kBinWidth) << ','
          << format_double(probe.delta_profiles[o][b]) << '\n';
    }
  }
  write_text(artifacts::probe(cfg), csv.str());

  std::ostringstream regions;
  regions << comment << '\n' << "region,site_id,depth_m,ic\n";
  json region_counts = json::array();
  for (std::size_t r = 0; r < cfg.explain.regions.size(); ++r) {
    const auto& reg = cfg.explain.regions[r];
    const RegionSelection sel = region_reconstruct(ic, ic_latents, k, reg.lo, reg.hi);
    region_counts.push_back({{"lo", reg.lo}, {"hi", reg.hi}, {"count", sel.count()}});
    for (std::size_t i = 0; i < sel.count(); ++i) {
      for (std::size_t b = 0; b < kProfileBins; ++b) {
        regions << r << ',' << ids[sel.indices[i]] << ',' << format_double((b + 0.5) * kBinWidth)
                << ',' << format_double(sel.profiles[i][b]) << '\n';
      }
    }
  }
  write_text(artifacts::regions(cfg), regions.str());

  const std::size_t bin = dominant_depth_bin(probe);
  write_json(artifacts::probe_summary(cfg),
             stamp({{"latent", "I_c" + std::to_string(k)},
                    {"latent_index", k},
                    {"offsets", probe.offsets},
                    {"n_samples", probe.n_samples},
                    {"seed", probe.seed},
                    {"sampling", "independent marginals, paired across offsets"},
                    {"dominant_bin", bin},
                    {"dominant_depth_m", (bin + 0.5) * kBinWidth},
                    {"dominant_meter", bin / kProfileCols},
                    {"regions", region_counts}},
                   cfg, "probe"));
}

}  // namespace

// ---------------------------------------------------------------- config

PipelineConfig config_from_json(const json& doc, const fs::path& config_dir) {
  if (!doc.is_object()) config_error("config must be a JSON object");
  check_keys(doc, "config",
             {"paths", "synth", "split", "autoencoder", "gbdt", "models", "reconstruct", "explain"});
  PipelineConfig cfg;
  cfg.config_dir = config_dir;

  const json& paths = section(doc, "paths");
  check_keys(paths, "paths", {"profiles_csv", "sites_csv", "output_dir"});
  if (paths.contains("profiles_csv") && !paths.at("profiles_csv").is_null()) {
    cfg.profiles_csv = get_or<std::string>(paths, "profiles_csv", "", "paths");
  }
  if (paths.contains("sites_csv") && !paths.at("sites_csv").is_null()) {
    cfg.sites_csv = get_or<std::string>(paths, "sites_csv", "", "paths");
  }
  cfg.output_dir = get_or<std::string>(paths, "output_dir", cfg.output_dir.string(), "paths");

  const json& synth = section(doc, "synth");
  check_keys(synth, "synth", {"n_sites", "seed"});
  cfg.synth_sites = get_or(synth, "n_sites", cfg.synth_sites, "synth");
  if (cfg.synth_sites < 1) config_error("synth.n_sites must be >= 1");
  cfg.synth_seed = require_seed(synth, "seed", "synth");

  const json& split = section(doc, "split");
  check_keys(split, "split", {"profile_seed", "site_seed"});
  cfg.profile_split_seed = require_seed(split, "profile_seed", "split");
  cfg.site_split_seed = require_seed(split, "site_seed", "split");

  const json& ae = section(doc, "autoencoder");
  check_keys(ae, "autoencoder", {"architecture", "positional_encoding", "ic", "qc1ncs"});
  const json& arch = section(ae, "architecture");
  check_keys(arch, "autoencoder.architecture", {"hidden", "latent"});
  cfg.architecture.hidden = get_or(arch, "hidden", cfg.architecture.hidden, "autoencoder.architecture");
  cfg.architecture.latent = get_or(arch, "latent", cfg.architecture.latent, "autoencoder.architecture");
  if (cfg.architecture.latent != static_cast<int>(kLatentDim)) {
    config_error("autoencoder.architecture.latent must be 10");
  }
  for (int h : cfg.architecture.hidden) {
    if (h < 1) config_error("autoencoder.architecture.hidden widths must be >= 1");
  }
  const json& pe = section(ae, "positional_encoding");
  check_keys(pe, "autoencoder.positional_encoding", {"d", "base", "rows"});
  cfg.pe.d = get_or(pe, "d", cfg.pe.d, "autoencoder.positional_encoding");
  cfg.pe.base = get_or(pe, "base", cfg.pe.base, "autoencoder.positional_encoding");
  cfg.pe.rows = get_or(pe, "rows", cfg.pe.rows, "autoencoder.positional_encoding");
  try {
    validate(cfg.pe);
  } catch (const Error& e) {
    config_error(std::string("autoencoder.positional_encoding: ") + e.what());
  }
  if (cfg.pe.d * cfg.pe.rows != static_cast<int>(kProfileBins)) {
    config_error("positional encoding rows x d must equal 200");
  }
  cfg.ae_ic = train_config_from(section(ae, "ic"), "autoencoder.ic");
  cfg.ae_qc = train_config_from(section(ae, "qc1ncs"), "autoencoder.qc1ncs");

  const json& gb = section(doc, "gbdt");
  check_keys(gb, "gbdt",
             {"max_depth", "early_stopping_rounds", "max_estimators", "learning_rate", "l2_lambda",
              "min_child_weight", "min_split_gain", "seed"});
  GbdtConfig& g = cfg.gbdt;
  g.max_depth = get_or(gb, "max_depth", g.max_depth, "gbdt");
  g.early_stopping_rounds = get_or(gb, "early_stopping_rounds", g.early_stopping_rounds, "gbdt");
  g.max_estimators = get_or(gb, "max_estimators", g.max_estimators, "gbdt");
  g.learning_rate = get_or(gb, "learning_rate", g.learning_rate, "gbdt");
  g.l2_lambda = get_or(gb, "l2_lambda", g.l2_lambda, "gbdt");
  g.min_child_weight = get_or(gb, "min_child_weight", g.min_child_weight, "gbdt");
  g.min_split_gain = get_or(gb, "min_split_gain", g.min_split_gain, "gbdt");
  g.seed = require_seed(gb, "seed", "gbdt");
  try {
    validate(g);
  } catch (const Error& e) {
    config_error(std::string("gbdt: ") + e.what());
  }

  if (doc.contains("models")) {
    cfg.models.clear();
    for (const auto& m : get_or<std::vector<std::string>>(doc, "models", {}, "config")) {
      try {
        cfg.models.push_back(parse_variant(m));
      } catch (const Error&) {
        config_error("unknown model variant '" + m + "'");
      }
    }
    if (cfg.models.empty()) config_error("models must list at least one variant");
  }

  const json& rec = section(doc, "reconstruct");
  check_keys(rec, "reconstruct", {"pca_components"});
  cfg.pca_components = get_or(rec, "pca_components", cfg.pca_components, "reconstruct");
  if (cfg.pca_components < 1 || cfg.pca_components > kProfileBins) {
    config_error("reconstruct.pca_components must be in [1, 200]");
  }

  const json& ex = section(doc, "explain");
  check_keys(ex, "explain",
             {"model", "rows", "background_cap", "background_seed", "top_k", "dependency_feature",
              "color_feature", "probe_latent", "probe_offsets", "probe_samples", "probe_seed",
              "regions"});
  ExplainConfig& e = cfg.explain;
  e.model = get_or(ex, "model", e.model, "explain");
  try {
    parse_variant(e.model);
  } catch (const Error&) {
    config_error("explain.model must be one of A, B, C, D");
  }
  e.rows = get_or(ex, "rows", e.rows, "explain");
  if (e.rows != "all" && e.rows != "test") config_error("explain.rows must be 'all' or 'test'");
  e.background_cap = get_or(ex, "background_cap", e.background_cap, "explain");
  if (e.background_cap < 1) config_error("explain.background_cap must be >= 1");
  e.background_seed = require_seed(ex, "background_seed", "explain");
  e.top_k = get_or(ex, "top_k", e.top_k, "explain");
  e.dependency_feature = get_or(ex, "dependency_feature", e.dependency_feature, "explain");
  e.color_feature = get_or(ex, "color_feature", e.color_feature, "explain");
  if (ex.contains("probe_latent")) {
    const json& pl = ex.at("probe_latent");
    e.probe_latent = pl.is_number_integer() ? std::to_string(pl.get<long long>())
                                            : get_or<std::string>(ex, "probe_latent", "", "explain");
  }
  e.probe_offsets = get_or(ex, "probe_offsets", e.probe_offsets, "explain");
  if (!e.probe_offsets.empty() &&
      std::find(e.probe_offsets.begin(), e.probe_offsets.end(), 0.0) == e.probe_offsets.end()) {
    config_error("explain.probe_offsets must include 0");
  }
  e.probe_samples = get_or(ex, "probe_samples", e.probe_samples, "explain");
  if (e.probe_samples < 1) config_error("explain.probe_samples must be >= 1");
  e.probe_seed = require_seed(ex, "probe_seed", "explain");
  if (ex.contains("regions")) {
    for (const auto& r : ex.at("regions")) {
      RegionConfig rc{get_or(r, "lo", 0.0, "explain.regions"), get_or(r, "hi", 0.0, "explain.regions")};
      if (!(rc.lo < rc.hi)) config_error("explain.regions entries need lo < hi");
      e.regions.push_back(rc);
    }
  }
  return cfg;
}

json config_to_json(const PipelineConfig& cfg) {
  json paths = {{"output_dir", cfg.output_dir.string()}};
  paths["profiles_csv"] = cfg.profiles_csv ? json(cfg.profiles_csv->string()) : json(nullptr);
  paths["sites_csv"] = cfg.sites_csv ? json(cfg.sites_csv->string()) : json(nullptr);
  std::vector<std::string> models;
  for (auto v : cfg.models) models.emplace_back(1, variant_letter(v));
  json regions = json::array();
  for (const auto& r : cfg.explain.regions) regions.push_back({{"lo", r.lo}, {"hi", r.hi}});
  const auto& e = cfg.explain;
  const auto& g = cfg.gbdt;
  return {
      {"paths", paths},
      {"synth", {{"n_sites", cfg.synth_sites}, {"seed", cfg.synth_seed}}},
      {"split", {{"profile_seed", cfg.profile_split_seed}, {"site_seed", cfg.site_split_seed}}},
      {"autoencoder",
       {{"architecture", {{"hidden", cfg.architecture.hidden}, {"latent", cfg.architecture.latent}}},
        {"positional_encoding", {{"d", cfg.pe.d}, {"base", cfg.pe.base}, {"rows", cfg.pe.rows}}},
        {"ic", train_config_json(cfg.ae_ic)},
        {"qc1ncs", train_config_json(cfg.ae_qc)}}},
      {"gbdt",
       {{"max_depth", g.max_depth},
        {"early_stopping_rounds", g.early_stopping_rounds},
        {"max_estimators", g.max_estimators},
        {"learning_rate", g.learning_rate},
        {"l2_lambda", g.l2_lambda},
        {"min_child_weight", g.min_child_weight},
        {"min_split_gain", g.min_split_gain},
        {"seed", g.seed}}},
      {"models", models},
      {"reconstruct", {{"pca_components", cfg.pca_components}}},
      {"explain",
       {{"model", e.model},
        {"rows", e.rows},
        {"background_cap", e.background_cap},
        {"background_seed", e.background_seed},
        {"top_k", e.top_k},
        {"dependency_feature", e.dependency_feature},
        {"color_feature", e.color_feature},
        {"probe_latent", e.probe_latent},
        {"probe_offsets", e.probe_offsets},
        {"probe_samples", e.probe_samples},
        {"probe_seed", e.probe_seed},
        {"regions", regions}}}};
}

PipelineConfig load_config(const fs::path& path) {
  if (!fs::exists(path)) config_error("config file " + path.string() + " does not exist");
  json doc;
  try {
    doc = json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    config_error("config file " + path.string() + ": " + e.what());
  }
  return config_from_json(doc, path.parent_path());
}

std::string config_hash(const PipelineConfig& cfg) {
  json doc = config_to_json(cfg);
  doc["paths"].erase("output_dir");
  const std::string text = doc.dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

PipelineConfig apply_overrides(PipelineConfig cfg, const std::string& stage,
                               const StageOverrides& overrides) {
  if (overrides.output_dir) cfg.output_dir = *overrides.output_dir;
  if (overrides.seed) {
    const std::uint64_t s = *overrides.seed;
    if (stage == "synth") cfg.synth_seed = s;
    else if (stage == "prepare") cfg.profile_split_seed = cfg.site_split_seed = s;
    else if (stage == "train-ae") cfg.ae_ic.seed = cfg.ae_qc.seed = s;
    else if (stage == "train-clf") cfg.gbdt.seed = s;
    else if (stage == "explain") cfg.explain.background_seed = s;
    else if (stage == "probe") cfg.explain.probe_seed = s;
  }
  return cfg;
}

std::uint64_t stage_seed(const PipelineConfig& cfg, const std::string& stage) {
  if (stage == "synth") return cfg.synth_seed;
  if (stage == "train-ae") return cfg.ae_ic.seed;
  if (stage == "train-clf") return cfg.gbdt.seed;
  if (stage == "explain") return cfg.explain.background_seed;
  if (stage == "probe") return cfg.explain.probe_seed;
  if (stage == "encode" || stage == "reconstruct-report") return cfg.profile_split_seed;
  return cfg.site_split_seed;
}

void run_stage(const std::string& stage, const PipelineConfig& cfg) {
  if (stage == "synth") stage_synth(cfg);
  else if (stage == "prepare") stage_prepare(cfg);
  else if (stage == "train-ae") stage_train_ae(cfg);
  else if (stage == "encode") stage_encode(cfg);
  else if (stage == "reconstruct-report") stage_reconstruct_report(cfg);
  else if (stage == "train-clf") stage_train_clf(cfg);
  else if (stage == "evaluate") stage_evaluate(cfg);
  else if (stage == "explain") stage_explain(cfg);
  else if (stage == "probe") stage_probe(cfg);
  else config_error("unknown subcommand '" + stage + "'");
}

json error_json(const std::string& stage, const std::string& kind, const std::string& message) {
  return {{"stage", stage}, {"error", kind}, {"message", message}};
}

namespace artifacts {
fs::path synth_profiles(const PipelineConfig& c) { return out_dir(c) / "synth" / "profiles.csv"; }
fs::path synth_sites(const PipelineConfig& c) { return out_dir(c) / "synth" / "sites.csv"; }
fs::path regular_profiles(const PipelineConfig& c) {
  return out_dir(c) / "prepare" / "regular_profiles.csv";
}
fs::path profile_split(const PipelineConfig& c) {
  return out_dir(c) / "prepare" / "split_profiles.json";
}
fs::path site_split(const PipelineConfig& c) { return out_dir(c) / "prepare" / "split_sites.json"; }
fs::path joined_sites(const PipelineConfig& c) { return out_dir(c) / "prepare" / "sites_joined.csv"; }
fs::path autoencoder(const PipelineConfig& c, Channel ch) {
  return out_dir(c) / "models" / ("ae_" + channel_name(ch) + ".json");
}
fs::path history(const PipelineConfig& c, Channel ch) {
  return out_dir(c) / "models" / ("history_" + channel_name(ch) + ".csv");
}
fs::path latents(const PipelineConfig& c) { return out_dir(c) / "latents.csv"; }
fs::path reconstruction(const PipelineConfig& c) {
  return out_dir(c) / "reconstruction" / "reconstruction.csv";
}
fs::path reconstruction_summary(const PipelineConfig& c) {
  return out_dir(c) / "reconstruction" / "reconstruction_summary.json";
}
fs::path ensemble(const PipelineConfig& c, FeatureVariant v) {
  return out_dir(c) / "models" / (std::string("gbdt_") + variant_letter(v) + ".json");
}
fs::path rounds(const PipelineConfig& c, FeatureVariant v) {
  return out_dir(c) / "models" / (std::string("rounds_") + variant_letter(v) + ".csv");
}
fs::path evaluation(const PipelineConfig& c) { return out_dir(c) / "evaluation.json"; }
fs::path shap_values(const PipelineConfig& c) { return out_dir(c) / "explain" / "shap_values.csv"; }
fs::path shap_summary(const PipelineConfig& c) { return out_dir(c) / "explain" / "shap_summary.json"; }
fs::path dependency(const PipelineConfig& c) { return out_dir(c) / "explain" / "dependency.csv"; }
fs::path probe(const PipelineConfig& c) { return out_dir(c) / "probe" / "probe.csv"; }
fs::path probe_summary(const PipelineConfig& c) { return out_dir(c) / "probe" / "probe_summary.json"; }
fs::path regions(const PipelineConfig& c) { return out_dir(c) / "probe" / "regions.csv"; }
}  // namespace artifacts

// ---------------------------------------------------------------- helpers

LabeledData build_labeled(FeatureVariant variant, const std::vector<JoinedRow>& joined,
                          const std::vector<std::string>& ids, const LatentTable* latents) {
  std::map<std::string, const JoinedRow*> by_id;
  for (const auto& row : joined) by_id.emplace(row.site.site_id, &row);
  LabeledData data;
  data.feature_names = feature_names(variant);
  data.features.resize(static_cast<Eigen::Index>(ids.size()),
                       static_cast<Eigen::Index>(data.feature_names.size()));
  for (std::size_t i = 0; i < ids.size(); ++i) {
    auto it = by_id.find(ids[i]);
    if (it == by_id.end()) {
      throw Error(ErrorKind::MissingInput, "split lists unknown site '" + ids[i] + "'");
    }
    const LatentPair* z = nullptr;
    if (latents != nullptr) {
      auto lt = latents->find(ids[i]);
      if (lt != latents->end()) z = &lt->second;
    }
    const auto x = assemble_features(variant, it->second->site, &it->second->profile, z);
    for (std::size_t j = 0; j < x.size(); ++j) {
      data.features(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x[j];
    }
    data.labels.push_back(it->second->site.label);
  }
  return data;
}

LatentTable encode_profiles(const AutoencoderModel& ic_model, const AutoencoderModel& qc_model,
                            const std::vector<RegularProfile>& profiles) {
  std::vector<ChannelArray> ic;
  std::vector<ChannelArray> qc;
  for (const auto& p : profiles) {
    ic.push_back(p.ic);
    qc.push_back(p.qc1ncs);
  }
  const Eigen::MatrixXd zi = encode_batch(ic_model, ic);
  const Eigen::MatrixXd zq = encode_batch(qc_model, qc);
  LatentTable table;
  for (std::size_t i = 0; i < profiles.size(); ++i) {
    LatentPair pair{};
    for (std::size_t j = 0; j < kLatentDim; ++j) {
      pair[j] = zi(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
      pair[kLatentDim + j] = zq(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
    }
    if (!table.emplace(profiles[i].site_id, pair).second) {
      throw Error(ErrorKind::DuplicateId, "duplicate profile id '" + profiles[i].site_id + "'");
    }
  }
  return table;
}

PreparedProfiles prepare_profiles(const std::vector<RawCptSamples>& raw) {
  PreparedProfiles out;
  for (const auto& r : raw) {
    try {
      out.profiles.push_back(regularize_profile(r));
    } catch (const Error& e) {
      out.rejected.emplace_back(r.site_id, std::string(to_string(e.kind())) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace latentcpt
