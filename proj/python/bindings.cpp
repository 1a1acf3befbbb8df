#include <pybind11/eigen.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <optional>
#include <string>
#include <vector>

#include "latentcpt/autoencoder.hpp"
#include "latentcpt/data.hpp"
#include "latentcpt/error.hpp"
#include "latentcpt/explain.hpp"
#include "latentcpt/gbdt.hpp"
#include "latentcpt/io.hpp"
#include "latentcpt/metrics.hpp"
#include "latentcpt/pca.hpp"
#include "latentcpt/pipeline.hpp"

namespace py = pybind11;
using namespace latentcpt;

namespace {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

std::vector<double> row(const Eigen::Ref<const RowMatrix>& m, Eigen::Index i) {
  return {m.row(i).data(), m.row(i).data() + m.cols()};
}

py::dict metrics_dict(const ClassificationMetrics& m) {
  py::dict d;
  d["accuracy"] = m.accuracy;
  d["balanced_accuracy"] = m.balanced_accuracy;
  d["precision"] = m.precision;
  d["recall"] = m.recall;
  d["f1"] = m.f1;
  return d;
}

}  // namespace

PYBIND11_MODULE(_latent_cpt, m) {
  m.doc() = "Latent CPT features, boosted trees and tree SHAP";

  static py::exception<Error> error_type(m, "LatentCptError", PyExc_RuntimeError);
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::set_error(error_type, (std::string(to_string(e.kind())) + ": " + e.what()).c_str());
    }
  });

  m.def("positional_encoding",
        [](int d, double base, int rows) { return positional_encoding({d, base, rows}); },
        py::arg("d") = 20, py::arg("base") = 10000.0, py::arg("rows") = 10);

  m.def("regularize_profile",
        [](const std::string& site_id, const std::vector<double>& depth, const std::vector<double>& ic,
           const std::vector<double>& qc1ncs) {
          if (depth.size() != ic.size() || depth.size() != qc1ncs.size()) {
            throw Error(ErrorKind::LengthMismatch, "depth, ic and qc1ncs must have equal length");
          }
          RawCptSamples raw{site_id, {}};
          for (std::size_t i = 0; i < depth.size(); ++i) raw.samples.push_back({depth[i], ic[i], qc1ncs[i]});
          const RegularProfile p = regularize_profile(raw);
          return py::make_tuple(std::vector<double>(p.ic.begin(), p.ic.end()),
                                std::vector<double>(p.qc1ncs.begin(), p.qc1ncs.end()));
        },
        py::arg("site_id"), py::arg("depth"), py::arg("ic"), py::arg("qc1ncs"),
        "Averages samples into 200 bins of 5 cm; returns (ic, qc1ncs).");

  m.def("split_dataset",
        [](std::vector<std::string> ids, std::uint64_t seed) {
          const DatasetSplit s = split_dataset(std::move(ids), seed);
          return py::make_tuple(s.train, s.val, s.test);
        },
        py::arg("ids"), py::arg("seed"));

  m.def("metrics",
        [](std::size_t tn, std::size_t fp, std::size_t fn, std::size_t tp) {
          return metrics_dict(metrics(ConfusionMatrix{tn, fp, fn, tp}));
        },
        py::arg("tn"), py::arg("fp"), py::arg("fn"), py::arg("tp"));

  m.def("confusion",
        [](const std::vector<int>& labels, const std::vector<int>& predictions) {
          const ConfusionMatrix cm = confusion(labels, predictions);
          return py::make_tuple(cm.tn, cm.fp, cm.fn, cm.tp);
        },
        py::arg("labels"), py::arg("predictions"), "Returns (tn, fp, fn, tp).");

  m.def("rmse", [](const std::vector<double>& r, const std::vector<double>& x) { return rmse(r, x); },
        py::arg("reconstructed"), py::arg("original"));
  m.def("abs_log_difference",
        [](const std::vector<double>& r, const std::vector<double>& x) { return abs_log_difference(r, x); },
        py::arg("reconstructed"), py::arg("original"));

  py::class_<PcaBasis>(m, "Pca")
      .def(py::init([](const Eigen::MatrixXd& data, std::size_t k) { return pca_fit(data, k); }),
           py::arg("data"), py::arg("k"))
      .def_readonly("mean", &PcaBasis::mean)
      .def_readonly("components", &PcaBasis::components)
      .def_readonly("variances", &PcaBasis::variances)
      .def("encode", [](const PcaBasis& b, const std::vector<double>& x) { return pca_encode(b, x); })
      .def("decode", [](const PcaBasis& b, const Eigen::VectorXd& z) { return pca_decode(b, z); });

  py::class_<AutoencoderModel>(m, "Autoencoder")
      .def_static("load", [](const std::filesystem::path& p) { return autoencoder_from_json(read_json(p)); })
      .def_property_readonly("channel", [](const AutoencoderModel& a) { return channel_name(a.channel); })
      .def("encode",
           [](const AutoencoderModel& a, const std::vector<double>& profile) {
             const LatentVector z = encode(a, profile);
             return std::vector<double>(z.begin(), z.end());
           })
      .def("decode", [](const AutoencoderModel& a, const std::vector<double>& z) {
        if (z.size() != kLatentDim) throw Error(ErrorKind::DimensionMismatch, "latent must have 10 entries");
        LatentVector v{};
        std::copy(z.begin(), z.end(), v.begin());
        const ChannelArray p = decode(a, v);
        return std::vector<double>(p.begin(), p.end());
      });

  py::class_<TreeEnsemble>(m, "Ensemble")
      .def_static("load", [](const std::filesystem::path& p) { return ensemble_from_json(read_json(p)); })
      .def_readonly("feature_names", &TreeEnsemble::feature_names)
      .def_readonly("base_score", &TreeEnsemble::base_score)
      .def_property_readonly("n_trees", [](const TreeEnsemble& e) { return e.trees.size(); })
      .def("predict_margin",
           [](const TreeEnsemble& e, const Eigen::Ref<const RowMatrix>& x) {
             std::vector<double> out;
             for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(predict_margin(e, row(x, i)));
             return out;
           })
      .def("predict_proba",
           [](const TreeEnsemble& e, const Eigen::Ref<const RowMatrix>& x) {
             std::vector<double> out;
             for (Eigen::Index i = 0; i < x.rows(); ++i) out.push_back(predict_proba(e, row(x, i)));
             return out;
           })
      .def("shap",
           [](const TreeEnsemble& e, const std::vector<double>& x, const Eigen::MatrixXd& background) {
             const ShapAttribution a = tree_shap(e, x, background);
             return py::make_tuple(a.base_value, a.values);
           },
           py::arg("x"), py::arg("background"), "Returns (base_value, shap values) in margin space.");

  m.def("perturbation_probe",
        [](const AutoencoderModel& model, const Eigen::Ref<const RowMatrix>& latents, std::size_t k,
           std::vector<double> offsets, std::size_t n_samples, std::uint64_t seed) {
          if (latents.cols() != static_cast<Eigen::Index>(kLatentDim)) {
            throw Error(ErrorKind::DimensionMismatch, "latents must have 10 columns");
          }
          std::vector<LatentVector> table(static_cast<std::size_t>(latents.rows()));
          for (Eigen::Index i = 0; i < latents.rows(); ++i) {
            for (std::size_t j = 0; j < kLatentDim; ++j) table[i][j] = latents(i, static_cast<Eigen::Index>(j));
          }
          if (offsets.empty()) offsets = default_probe_offsets();
          const ProbeResult r = perturbation_probe(model, table, k, offsets, n_samples, seed);
          py::dict d;
          d["offsets"] = r.offsets;
          d["delta_profiles"] = r.delta_profiles;
          d["mean_profiles"] = r.mean_profiles;
          d["dominant_bin"] = dominant_depth_bin(r);
          return d;
        },
        py::arg("model"), py::arg("latents"), py::arg("k"), py::arg("offsets") = std::vector<double>{},
        py::arg("n_samples") = 100, py::arg("seed") = 1);

  m.def("stage_names", &stage_names);
  m.def("config_hash", [](const std::filesystem::path& p) { return config_hash(load_config(p)); });
  m.def("run_stage",
        [](const std::string& stage, const std::filesystem::path& config,
           std::optional<std::filesystem::path> out, std::optional<std::uint64_t> seed) {
          PipelineConfig cfg = apply_overrides(load_config(config), stage, {std::move(out), seed});
          py::gil_scoped_release release;
          run_stage(stage, cfg);
        },
        py::arg("stage"), py::arg("config"), py::arg("out") = py::none(), py::arg("seed") = py::none());

}
