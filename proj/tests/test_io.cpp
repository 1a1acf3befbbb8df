#include <gtest/gtest.h>

#include <fstream>

#include "latentcpt/error.hpp"
#include "latentcpt/io.hpp"
#include "latentcpt/pipeline.hpp"
#include "support.hpp"

using namespace latentcpt;
using nlohmann::json;

namespace {

ErrorKind kind_of(const std::function<void()>& fn) {
  try {
    fn();
  } catch (const Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "expected an Error";
  return ErrorKind::IoError;
}

json minimal_config() {
  return json::parse(R"({
    "synth": {"seed": 1},
    "split": {"profile_seed": 2, "site_seed": 3},
    "autoencoder": {"ic": {"seed": 4}, "qc1ncs": {"seed": 5}},
    "gbdt": {"seed": 6},
    "explain": {"background_seed": 7, "probe_seed": 8}
  })");
}

}  // namespace

TEST(Doubles, ShortestRoundTrip) {
  Rng rng(1);
  for (int i = 0; i < 1000; ++i) {
    const double v = rng.normal() * std::pow(10.0, rng.uniform(-8.0, 8.0));
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.1), "0.1");
  EXPECT_THROW(parse_double("1.5x"), Error);
  EXPECT_THROW(parse_double(""), Error);
}

TEST(Csv, CommentsAndBlankLinesSkipped) {
  const auto dir = latentcpt::testing::scratch_dir("csv");
  write_text(dir / "t.csv", "# config_hash=abc seed=1\n\na,b\n1,2\n# note\n3,4\n");
  const CsvTable t = read_csv(dir / "t.csv");
  EXPECT_EQ(t.header, (std::vector<std::string>{"a", "b"}));
  ASSERT_EQ(t.rows.size(), 2u);
  EXPECT_EQ(t.rows[1][0], "3");
  EXPECT_EQ(t.column("b"), 1u);
  EXPECT_EQ(kind_of([&] { t.column("c"); }), ErrorKind::FormatError);
}

TEST(Csv, ProfileAndSiteRoundTrip) {
  const auto dir = latentcpt::testing::scratch_dir("roundtrip");
  const auto corpus = synth_corpus(5, 3);
  write_profile_csv(dir / "p.csv", corpus.profiles, Provenance{"deadbeef", 3});
  write_site_csv(dir / "s.csv", corpus.sites);
  const auto profiles = read_profile_csv(dir / "p.csv");
  const auto sites = read_site_csv(dir / "s.csv");
  ASSERT_EQ(profiles.size(), 5u);
  for (std::size_t i = 0; i < 5; ++i) {
    EXPECT_EQ(profiles[i].site_id, corpus.profiles[i].site_id);
    ASSERT_EQ(profiles[i].samples.size(), corpus.profiles[i].samples.size());
    EXPECT_EQ(profiles[i].samples[7].ic, corpus.profiles[i].samples[7].ic);
    EXPECT_EQ(sites[i].gwd, corpus.sites[i].gwd);
    EXPECT_EQ(sites[i].label, corpus.sites[i].label);
  }
  EXPECT_EQ(read_text(dir / "p.csv").rfind("# config_hash=deadbeef seed=3\nsite_id,depth_m,ic,qc1ncs\n", 0), 0u);
}

TEST(Csv, RegularAndLatentRoundTrip) {
  const auto dir = latentcpt::testing::scratch_dir("regular");
  std::vector<RegularProfile> profiles;
  for (const auto& raw : synth_corpus(3, 4).profiles) profiles.push_back(regularize_profile(raw));
  write_regular_csv(dir / "r.csv", profiles);
  const auto back = read_regular_csv(dir / "r.csv");
  ASSERT_EQ(back.size(), 3u);
  EXPECT_EQ(back[2].ic, profiles[2].ic);
  EXPECT_EQ(back[2].qc1ncs, profiles[2].qc1ncs);

  std::vector<LatentRow> rows{{"a", {}}, {"b", {}}};
  rows[1].values[19] = -1.25e-7;
  write_latent_csv(dir / "z.csv", rows);
  const auto header = read_csv(dir / "z.csv").header;
  EXPECT_EQ(header, latent_table_header());
  EXPECT_EQ(header[1], "I_c0");
  EXPECT_EQ(header[20], "q_c9");
  EXPECT_EQ(read_latent_csv(dir / "z.csv")[1].values[19], -1.25e-7);
}

TEST(Csv, SiteValidation) {
  const auto dir = latentcpt::testing::scratch_dir("sites");
  write_text(dir / "bad.csv", "site_id,pga_g,gwd_m,l_m,slope_pct,elev_m,label\nS1,0.3,1,10,1,2,7\n");
  EXPECT_THROW(read_site_csv(dir / "bad.csv"), Error);
  write_text(dir / "cols.csv", "site_id,pga_g\nS1,0.3\n");
  EXPECT_THROW(read_site_csv(dir / "cols.csv"), Error);
}

TEST(Json, AutoencoderRoundTripIsExact) {
  const auto model = init_autoencoder(Channel::Qc1ncs, {}, {80.0, 30.0}, {}, 3);
  const json doc = autoencoder_to_json(model);
  EXPECT_EQ(doc.at("format_version"), kAutoencoderFormat);
  EXPECT_EQ(doc.at("channel"), "qc1ncs");
  const auto back = autoencoder_from_json(json::parse(doc.dump()));
  EXPECT_EQ(autoencoder_to_json(back).dump(), doc.dump());
  ChannelArray p{};
  p.fill(90.0);
  EXPECT_EQ(encode(back, p), encode(model, p));
}

TEST(Json, EnsembleRoundTripPreservesMargins) {
  Rng rng(5);
  const TreeEnsemble e = latentcpt::testing::random_ensemble(6, 5, 3, rng);
  const json doc = ensemble_to_json(e);
  EXPECT_EQ(doc.at("format_version"), kEnsembleFormat);
  const TreeEnsemble back = ensemble_from_json(json::parse(doc.dump()));
  EXPECT_EQ(back.feature_names, e.feature_names);
  const Eigen::MatrixXd rows = latentcpt::testing::random_rows(50, 6, rng);
  for (Eigen::Index i = 0; i < rows.rows(); ++i) {
    const auto x = latentcpt::testing::row_of(rows, i);
    EXPECT_EQ(predict_margin(back, x), predict_margin(e, x));
  }
  json broken = doc;
  broken["format_version"] = "other/9";
  EXPECT_EQ(kind_of([&] { ensemble_from_json(broken); }), ErrorKind::FormatError);
}

TEST(Json, MetricsUseNullForUndefined) {
  const json j = metrics_to_json({3, 0, 2, 0}, metrics({3, 0, 2, 0}));
  EXPECT_TRUE(j.at("metrics").at("precision").is_null());
  EXPECT_EQ(j.at("confusion").at("tn"), 3);
}

TEST(Json, SplitRoundTrip) {
  DatasetSplit s{{"a", "b"}, {"c"}, {"d"}, 9};
  const DatasetSplit back = split_from_json(split_to_json(s));
  EXPECT_EQ(back.train, s.train);
  EXPECT_EQ(back.test, s.test);
  EXPECT_EQ(back.seed, 9u);
}

TEST(Config, DefaultsFillUnsetFields) {
  const PipelineConfig cfg = config_from_json(minimal_config(), "/base");
  EXPECT_EQ(cfg.config_dir, "/base");
  EXPECT_EQ(cfg.synth_sites, 2000u);
  EXPECT_EQ(cfg.ae_ic.seed, 4u);
  EXPECT_EQ(cfg.ae_ic.batch_size, 32u);
  EXPECT_EQ(cfg.gbdt.max_depth, 11);
  EXPECT_EQ(cfg.models.size(), 4u);
  EXPECT_EQ(cfg.explain.background_cap, 256u);
  const PipelineConfig again = config_from_json(config_to_json(cfg), "/base");
  EXPECT_EQ(config_to_json(again), config_to_json(cfg));
}

TEST(Config, SeedsMustBeExplicit) {
  for (const auto& [section, key] : std::vector<std::pair<std::string, std::string>>{
           {"synth", "seed"}, {"split", "site_seed"}, {"gbdt", "seed"}, {"explain", "probe_seed"}}) {
    json doc = minimal_config();
    doc[section].erase(key);
    EXPECT_EQ(kind_of([&] { config_from_json(doc); }), ErrorKind::ConfigError) << section << "." << key;
  }
  json doc = minimal_config();
  doc["autoencoder"]["ic"].erase("seed");
  EXPECT_EQ(kind_of([&] { config_from_json(doc); }), ErrorKind::ConfigError);
}

TEST(Config, RejectsUnknownKeysAndBadValues) {
  json doc = minimal_config();
  doc["gbdt"]["max_dept"] = 4;
  EXPECT_EQ(kind_of([&] { config_from_json(doc); }), ErrorKind::ConfigError);
  doc = minimal_config();
  doc["models"] = {"A", "E"};
  EXPECT_EQ(kind_of([&] { config_from_json(doc); }), ErrorKind::ConfigError);
  doc = minimal_config();
  doc["autoencoder"]["architecture"] = {{"latent", 12}};
  EXPECT_EQ(kind_of([&] { config_from_json(doc); }), ErrorKind::ConfigError);
  doc = minimal_config();
  doc["explain"]["probe_offsets"] = {-1.0, 1.0};
  EXPECT_EQ(kind_of([&] { config_from_json(doc); }), ErrorKind::ConfigError);
  doc = minimal_config();
  doc["gbdt"]["learning_rate"] = "fast";
  EXPECT_EQ(kind_of([&] { config_from_json(doc); }), ErrorKind::ConfigError);
}

TEST(Config, HashIgnoresOutputDirButTracksSettings) {
  const PipelineConfig a = config_from_json(minimal_config());
  PipelineConfig b = a;
  b.output_dir = "elsewhere";
  EXPECT_EQ(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 16u);
  b.gbdt.learning_rate = 0.2;
  EXPECT_NE(config_hash(a), config_hash(b));
}

TEST(Config, OverridesTargetTheStageSeed) {
  const PipelineConfig base = config_from_json(minimal_config());
  StageOverrides o{std::filesystem::path("x"), 99};
  EXPECT_EQ(apply_overrides(base, "synth", o).synth_seed, 99u);
  const auto prep = apply_overrides(base, "prepare", o);
  EXPECT_EQ(prep.profile_split_seed, 99u);
  EXPECT_EQ(prep.site_split_seed, 99u);
  const auto ae = apply_overrides(base, "train-ae", o);
  EXPECT_EQ(ae.ae_ic.seed, 99u);
  EXPECT_EQ(ae.ae_qc.seed, 99u);
  EXPECT_EQ(apply_overrides(base, "train-clf", o).gbdt.seed, 99u);
  EXPECT_EQ(apply_overrides(base, "explain", o).explain.background_seed, 99u);
  EXPECT_EQ(apply_overrides(base, "probe", o).explain.probe_seed, 99u);
  EXPECT_EQ(apply_overrides(base, "evaluate", o).output_dir, "x");
  EXPECT_EQ(stage_seed(apply_overrides(base, "probe", o), "probe"), 99u);
}

TEST(Config, LoadResolvesAgainstConfigDirectory) {
  const auto dir = latentcpt::testing::scratch_dir("config");
  write_text(dir / "c.json", minimal_config().dump());
  const PipelineConfig cfg = load_config(dir / "c.json");
  EXPECT_EQ(cfg.config_dir, dir);
  EXPECT_EQ(artifacts::evaluation(cfg), dir / "out" / "evaluation.json");
  write_text(dir / "broken.json", "{ not json");
  EXPECT_EQ(kind_of([&] { load_config(dir / "broken.json"); }), ErrorKind::ConfigError);
  EXPECT_EQ(kind_of([&] { load_config(dir / "absent.json"); }), ErrorKind::ConfigError);
}
