#include "latentcpt/io.hpp"

#include <charconv>
#include <fstream>
#include <map>
#include <sstream>

#include "latentcpt/error.hpp"

namespace latentcpt {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

void expect_header(const CsvTable& table, const std::vector<std::string>& expected,
                   const fs::path& path) {
  if (table.header != expected) {
    std::string want;
    for (const auto& h : expected) want += (want.empty() ? "" : ",") + h;
    throw Error(ErrorKind::FormatError, path.string() + ": expected header '" + want + "'");
  }
}

std::string join(const std::vector<std::string>& fields) {
  std::string out;
  for (std::size_t i = 0; i < fields.size(); ++i) {
    if (i > 0) out += ',';
    out += fields[i];
  }
  return out;
}

void begin_csv(std::ostringstream& out, const std::optional<Provenance>& provenance,
               const std::vector<std::string>& header) {
  if (provenance) out << provenance_comment(*provenance) << '\n';
  out << join(header) << '\n';
}

json vector_json(const Eigen::MatrixXd& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out.push_back(m(r, c));
  }
  return out;
}

const char* activation_name(Activation a) { return a == Activation::Relu ? "relu" : "identity"; }

Activation parse_activation(const std::string& name) {
  if (name == "relu") return Activation::Relu;
  if (name == "identity") return Activation::Identity;
  throw Error(ErrorKind::FormatError, "unknown activation '" + name + "'");
}

json layers_to_json(const std::vector<DenseLayer>& layers) {
  json out = json::array();
  for (const auto& l : layers) {
    out.push_back({{"in", l.in_dim()},
                   {"out", l.out_dim()},
                   {"activation", activation_name(l.activation)},
                   {"weights", vector_json(l.weights)},
                   {"biases", vector_json(l.biases)}});
  }
  return out;
}

std::vector<DenseLayer> layers_from_json(const json& doc) {
  std::vector<DenseLayer> layers;
  for (const auto& item : doc) {
    DenseLayer l;
    const auto in = item.at("in").get<Eigen::Index>();
    const auto out = item.at("out").get<Eigen::Index>();
    const auto w = item.at("weights").get<std::vector<double>>();
    const auto b = item.at("biases").get<std::vector<double>>();
    if (in < 1 || out < 1 || static_cast<Eigen::Index>(w.size()) != in * out ||
        static_cast<Eigen::Index>(b.size()) != out) {
      throw Error(ErrorKind::FormatError, "layer shape does not match its parameter arrays");
    }
    l.weights.resize(out, in);
    for (Eigen::Index r = 0; r < out; ++r) {
      for (Eigen::Index c = 0; c < in; ++c) l.weights(r, c) = w[static_cast<std::size_t>(r * in + c)];
    }
    l.biases = Eigen::Map<const Eigen::VectorXd>(b.data(), out);
    l.activation = parse_activation(item.at("activation").get<std::string>());
    layers.push_back(std::move(l));
  }
  return layers;
}

json node_to_json(const RegressionTree& tree, int id) {
  const TreeNode& n = tree.nodes[static_cast<std::size_t>(id)];
  if (n.is_leaf()) return {{"leaf", n.weight}, {"cover", n.cover}};
  return {{"feature", n.feature},
          {"threshold", n.threshold},
          {"default_left", n.default_left},
          {"gain", n.gain},
          {"cover", n.cover},
          {"children", json::array({node_to_json(tree, n.left), node_to_json(tree, n.right)})}};
}

int node_from_json(const json& doc, RegressionTree& tree, int depth) {
  if (depth > 64) throw Error(ErrorKind::FormatError, "tree nesting too deep");
  const int id = static_cast<int>(tree.nodes.size());
  tree.nodes.emplace_back();
  TreeNode node;
  node.cover = doc.at("cover").get<double>();
  if (doc.contains("leaf")) {
    node.weight = doc.at("leaf").get<double>();
    tree.nodes[static_cast<std::size_t>(id)] = node;
    return id;
  }
  node.feature = doc.at("feature").get<int>();
  node.threshold = doc.at("threshold").get<double>();
  node.default_left = doc.value("default_left", true);
  node.gain = doc.value("gain", 0.0);
  const auto& children = doc.at("children");
  if (!children.is_array() || children.size() != 2) {
    throw Error(ErrorKind::FormatError, "internal node needs exactly two children");
  }
  node.left = node_from_json(children[0], tree, depth + 1);
  node.right = node_from_json(children[1], tree, depth + 1);
  tree.nodes[static_cast<std::size_t>(id)] = node;
  return id;
}

void require_format(const json& doc, const char* format) {
  if (!doc.is_object() || doc.value("format_version", std::string()) != format) {
    throw Error(ErrorKind::FormatError, std::string("expected format_version '") + format + "'");
  }
}

}  // namespace

std::string provenance_comment(const Provenance& p) {
  return "# config_hash=" + p.config_hash + " seed=" + std::to_string(p.seed);
}

json provenance_json(const Provenance& p) {
  return {{"config_hash", p.config_hash}, {"seed", p.seed}};
}

std::size_t CsvTable::column(const std::string& name) const {
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (header[i] == name) return i;
  }
  throw Error(ErrorKind::FormatError, "missing CSV column '" + name + "'");
}

CsvTable read_csv(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  CsvTable table;
  std::string line;
  bool have_header = false;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty() || line.front() == '#') continue;
    auto fields = split_line(line);
    if (!have_header) {
      table.header = std::move(fields);
      have_header = true;
      continue;
    }
    if (fields.size() != table.header.size()) {
      throw Error(ErrorKind::FormatError, path.string() + ":" + std::to_string(line_no) +
                                              ": expected " + std::to_string(table.header.size()) +
                                              " fields");
    }
    table.rows.push_back(std::move(fields));
  }
  if (!have_header) throw Error(ErrorKind::FormatError, path.string() + ": missing header");
  return table;
}

double parse_double(const std::string& text) {
  double value = 0.0;
  const char* first = text.data();
  const char* last = text.data() + text.size();
  const auto [ptr, ec] = std::from_chars(first, last, value);
  if (ec != std::errc() || ptr != last) {
    throw Error(ErrorKind::FormatError, "not a number: '" + text + "'");
  }
  return value;
}

std::string format_double(double value) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, value);
  return std::string(buf, ptr);
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::IoError, "cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorKind::IoError, "cannot write " + path.string());
    out << text;
    if (!out) throw Error(ErrorKind::IoError, "failed writing " + path.string());
  }
  fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::parse_error& e) {
    throw Error(ErrorKind::FormatError, path.string() + ": " + e.what());
  }
}

void write_json(const fs::path& path, const json& doc) { write_text(path, doc.dump(2) + "\n"); }

std::vector<RawCptSamples> read_profile_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, {"site_id", "depth_m", "ic", "qc1ncs"}, path);
  std::vector<RawCptSamples> out;
  std::map<std::string, std::size_t> index;
  for (const auto& row : t.rows) {
    auto [it, inserted] = index.emplace(row[0], out.size());
    if (inserted) out.push_back({row[0], {}});
    out[it->second].samples.push_back(
        {parse_double(row[1]), parse_double(row[2]), parse_double(row[3])});
  }
  return out;
}

void write_profile_csv(const fs::path& path, const std::vector<RawCptSamples>& profiles,
                       const std::optional<Provenance>& provenance) {
  std::ostringstream out;
  begin_csv(out, provenance, {"site_id", "depth_m", "ic", "qc1ncs"});
  for (const auto& p : profiles) {
    for (const auto& s : p.samples) {
      out << p.site_id << ',' << format_double(s.depth) << ',' << format_double(s.ic) << ','
          << format_double(s.qc1ncs) << '\n';
    }
  }
  write_text(path, out.str());
}

std::vector<SiteRecord> read_site_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, {"site_id", "pga_g", "gwd_m", "l_m", "slope_pct", "elev_m", "label"}, path);
  std::vector<SiteRecord> out;
  for (const auto& row : t.rows) {
    SiteRecord s;
    s.site_id = row[0];
    s.pga = parse_double(row[1]);
    s.gwd = parse_double(row[2]);
    s.l_river = parse_double(row[3]);
    s.slope = parse_double(row[4]);
    s.elevation = parse_double(row[5]);
    if (row[6] != "0" && row[6] != "1") {
      throw Error(ErrorKind::FormatError, "site '" + s.site_id + "': label must be 0 or 1");
    }
    s.label = row[6] == "1" ? 1 : 0;
    if (!(s.pga > 0.0) || !(s.gwd >= 0.0) || !(s.l_river >= 0.0)) {
      throw Error(ErrorKind::InvalidInput,
                  "site '" + s.site_id + "': needs pga > 0, gwd >= 0 and l >= 0");
    }
    out.push_back(std::move(s));
  }
  return out;
}

void write_site_csv(const fs::path& path, const std::vector<SiteRecord>& sites,
                    const std::optional<Provenance>& provenance) {
  std::ostringstream out;
  begin_csv(out, provenance, {"site_id", "pga_g", "gwd_m", "l_m", "slope_pct", "elev_m", "label"});
  for (const auto& s : sites) {
    out << s.site_id << ',' << format_double(s.pga) << ',' << format_double(s.gwd) << ','
        << format_double(s.l_river) << ',' << format_double(s.slope) << ','
        << format_double(s.elevation) << ',' << s.label << '\n';
  }
  write_text(path, out.str());
}

std::vector<RegularProfile> read_regular_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  if (t.header.size() != kProfileBins + 2 || t.header[0] != "site_id" || t.header[1] != "channel") {
    throw Error(ErrorKind::FormatError, path.string() + ": expected site_id,channel,b0..b199");
  }
  std::vector<RegularProfile> out;
  std::map<std::string, std::size_t> index;
  std::map<std::string, int> seen;
  for (const auto& row : t.rows) {
    auto [it, inserted] = index.emplace(row[0], out.size());
    if (inserted) {
      out.emplace_back();
      out.back().site_id = row[0];
    }
    const Channel ch = parse_channel(row[1]);
    const int bit = ch == Channel::Ic ? 1 : 2;
    if (seen[row[0]] & bit) throw Error(ErrorKind::DuplicateId, "duplicate channel row for " + row[0]);
    seen[row[0]] |= bit;
    ChannelArray& dst = ch == Channel::Ic ? out[it->second].ic : out[it->second].qc1ncs;
    for (std::size_t k = 0; k < kProfileBins; ++k) dst[k] = parse_double(row[k + 2]);
  }
  for (const auto& p : out) {
    if (seen[p.site_id] != 3) {
      throw Error(ErrorKind::FormatError, "site '" + p.site_id + "' lacks one channel");
    }
    check_regular_profile(p);
  }
  return out;
}

void write_regular_csv(const fs::path& path, const std::vector<RegularProfile>& profiles,
                       const std::optional<Provenance>& provenance) {
  std::vector<std::string> header{"site_id", "channel"};
  for (std::size_t k = 0; k < kProfileBins; ++k) header.push_back("b" + std::to_string(k));
  std::ostringstream out;
  begin_csv(out, provenance, header);
  for (const auto& p : profiles) {
    for (Channel ch : {Channel::Ic, Channel::Qc1ncs}) {
      out << p.site_id << ',' << channel_name(ch);
      for (double v : p.channel(ch)) out << ',' << format_double(v);
      out << '\n';
    }
  }
  write_text(path, out.str());
}

json split_to_json(const DatasetSplit& split) {
  return {{"train", split.train}, {"val", split.val}, {"test", split.test}, {"seed", split.seed}};
}

DatasetSplit split_from_json(const json& doc) {
  DatasetSplit s;
  try {
    s.train = doc.at("train").get<std::vector<std::string>>();
    s.val = doc.at("val").get<std::vector<std::string>>();
    s.test = doc.at("test").get<std::vector<std::string>>();
    s.seed = doc.at("seed").get<std::uint64_t>();
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("split manifest: ") + e.what());
  }
  return s;
}

json autoencoder_to_json(const AutoencoderModel& model) {
  return {{"format_version", kAutoencoderFormat},
          {"channel", channel_name(model.channel)},
          {"pe", {{"d", model.pe.d}, {"base", model.pe.base}, {"rows", model.pe.rows}}},
          {"norm", {{"mean", model.norm.mean}, {"std", model.norm.std}}},
          {"encoder", layers_to_json(model.encoder)},
          {"decoder", layers_to_json(model.decoder)}};
}

AutoencoderModel autoencoder_from_json(const json& doc) {
  require_format(doc, kAutoencoderFormat);
  AutoencoderModel m;
  try {
    m.channel = parse_channel(doc.at("channel").get<std::string>());
    const auto& pe = doc.at("pe");
    m.pe = {pe.at("d").get<int>(), pe.at("base").get<double>(), pe.at("rows").get<int>()};
    m.norm = {doc.at("norm").at("mean").get<double>(), doc.at("norm").at("std").get<double>()};
    m.encoder = layers_from_json(doc.at("encoder"));
    m.decoder = layers_from_json(doc.at("decoder"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::FormatError, std::string("autoencoder file: ") + e.what());
  }
  check_autoencoder(m);
  return m;
}

json ensemble_to_json(const TreeEnsemble& ensemble) {
  json trees = json::array();
  for (const auto& t : ensemble.trees) trees.push_back(node_to_json(t, 0));
  return {{"format_version", kEnsembleFormat},
          {"base_score", ensemble.base_score},
          {"shrinkage", ensemble.shrinkage},
          {"feature_names", ensemble.feature_names},
          {"trees", trees}};
}

TreeEnsemble ensemble_from_json(const json& doc) {
  require_format(doc, kEnsembleFormat);
  TreeEnsemble e;
  try {
    e.base_score = doc.at("base_score").get<double>();
    e.shrinkage = doc.at("shrinkage").get<double>();
    e.feature_names = doc.at("feature_names").get<std::vector<std::string>>();
    for (const auto& t : doc.at("trees")) {
      RegressionTree tree;
      node_from_json(t, tree, 0);
      e.trees.push_back(std::move(tree));
    }
  } catch (const json::exception& ex) {
    throw Error(ErrorKind::FormatError, std::string("ensemble file: ") + ex.what());
  }
  check_ensemble(e);
  return e;
}

json metrics_to_json(const ConfusionMatrix& cm, const ClassificationMetrics& m) {
  auto opt = [](const std::optional<double>& v) -> json { return v ? json(*v) : json(nullptr); };
  return {{"confusion", {{"tn", cm.tn}, {"fp", cm.fp}, {"fn", cm.fn}, {"tp", cm.tp}}},
          {"metrics",
           {{"accuracy", opt(m.accuracy)},
            {"balanced_accuracy", opt(m.balanced_accuracy)},
            {"precision", opt(m.precision)},
            {"recall", opt(m.recall)},
            {"f1", opt(m.f1)}}}};
}

std::vector<std::string> latent_table_header() {
  std::vector<std::string> header{"site_id"};
  const auto names = feature_names(FeatureVariant::D);
  header.insert(header.end(), names.begin() + 5, names.end());
  return header;
}

std::vector<LatentRow> read_latent_csv(const fs::path& path) {
  const CsvTable t = read_csv(path);
  expect_header(t, latent_table_header(), path);
  std::vector<LatentRow> out;
  for (const auto& row : t.rows) {
    LatentRow r;
    r.site_id = row[0];
    for (std::size_t i = 0; i < r.values.size(); ++i) r.values[i] = parse_double(row[i + 1]);
    out.push_back(std::move(r));
  }
  return out;
}

void write_latent_csv(const fs::path& path, const std::vector<LatentRow>& rows,
                      const std::optional<Provenance>& provenance) {
  std::ostringstream out;
  begin_csv(out, provenance, latent_table_header());
  for (const auto& r : rows) {
    out << r.site_id;
    for (double v : r.values) out << ',' << format_double(v);
    out << '\n';
  }
  write_text(path, out.str());
}

void write_history_csv(const fs::path& path, const std::vector<EpochRecord>& history,
                       const std::optional<Provenance>& provenance) {
  std::ostringstream out;
  begin_csv(out, provenance, {"epoch", "train_mse", "val_mse"});
  for (const auto& h : history) {
    out << h.epoch << ',' << format_double(h.train_mse) << ',' << format_double(h.val_mse) << '\n';
  }
  write_text(path, out.str());
}

}  // namespace latentcpt
