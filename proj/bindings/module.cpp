#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <torch/torch.h>

#include "talkmesh/audio.hpp"
#include "talkmesh/data.hpp"
#include "talkmesh/decoder.hpp"
#include "talkmesh/gradcheck.hpp"
#include "talkmesh/losses.hpp"
#include "talkmesh/mesh.hpp"
#include "talkmesh/metrics.hpp"

namespace py = pybind11;
using namespace talkmesh;

namespace {

torch::Tensor to_tensor(const py::array_t<double, py::array::c_style | py::array::forcecast>& a) {
  std::vector<std::int64_t> shape(a.ndim());
  for (py::ssize_t i = 0; i < a.ndim(); ++i) shape[static_cast<std::size_t>(i)] = a.shape(i);
  auto t = torch::empty(shape, torch::kFloat64);
  std::memcpy(t.data_ptr<double>(), a.data(), sizeof(double) * static_cast<std::size_t>(a.size()));
  return t;
}

py::array_t<double> to_array(const torch::Tensor& t) {
  auto c = t.detach().to(torch::kFloat64).contiguous();
  std::vector<py::ssize_t> shape(c.sizes().begin(), c.sizes().end());
  py::array_t<double> a(shape);
  std::memcpy(a.mutable_data(), c.data_ptr<double>(),
              sizeof(double) * static_cast<std::size_t>(c.numel()));
  return a;
}

using DoubleArray = py::array_t<double, py::array::c_style | py::array::forcecast>;

}  // namespace

PYBIND11_MODULE(_talkmesh_core, m) {
  m.doc() = "Speech-driven 3D talking mesh: core numerical operations";

  // mesh / io -----------------------------------------------------------
  m.def(
      "derive_edges",
      [](const std::vector<std::array<std::int64_t, 3>>& faces, std::int64_t vertex_count) {
        return derive_edges(faces, vertex_count);
      },
      py::arg("faces"), py::arg("vertex_count"),
      "Deduplicated undirected edge set of a triangle list");

  m.def(
      "write_mesh_sequence",
      [](const DoubleArray& frames, double fps, const std::string& path) {
        MotionSequence seq{to_tensor(frames).to(torch::kFloat32), static_cast<float>(fps)};
        write_mesh_sequence(seq, path);
      },
      py::arg("frames"), py::arg("fps"), py::arg("path"));

  m.def(
      "read_mesh_sequence",
      [](const std::string& path) {
        auto seq = read_mesh_sequence(path);
        return py::make_tuple(to_array(seq.frames), seq.fps);
      },
      py::arg("path"), "Returns (frames, fps)");

  // decoder building blocks ----------------------------------------------
  m.def(
      "periodic_positional_encoding",
      [](std::int64_t t, std::int64_t period, std::int64_t dim) {
        return to_array(periodic_positional_encoding(t, period, dim));
      },
      py::arg("t"), py::arg("period"), py::arg("dim"));
  m.def(
      "biased_causal_mask",
      [](std::int64_t tq, std::int64_t tk, std::int64_t period) {
        return to_array(biased_causal_mask(tq, tk, period));
      },
      py::arg("t_query"), py::arg("t_key"), py::arg("period"));
  m.def(
      "alignment_bias",
      [](std::int64_t tq, std::int64_t tk, double slope) {
        return to_array(alignment_bias(tq, tk, slope));
      },
      py::arg("t_query"), py::arg("t_key"), py::arg("slope"));

  // audio -----------------------------------------------------------------
  m.def(
      "log_mel_features",
      [](const DoubleArray& samples, int sample_rate, std::int64_t num_bands) {
        MelOptions mel;
        mel.num_bands = num_bands;
        AudioClip clip{to_tensor(samples), sample_rate};
        return to_array(log_mel_features(clip, mel, torch::kFloat64));
      },
      py::arg("samples"), py::arg("sample_rate") = 16000, py::arg("num_bands") = 26);

  // losses ------------------------------------------------------------------
  m.def(
      "style_similarity_loss",
      [](const DoubleArray& a, const DoubleArray& m, const DoubleArray& p, double w1, double w2,
         double w3) {
        return losses::style_similarity_loss(to_tensor(a), to_tensor(m), to_tensor(p), w1, w2, w3)
            .item<double>();
      },
      py::arg("style_audio"), py::arg("style_motion"), py::arg("style_identity"),
      py::arg("w1") = 1.0, py::arg("w2") = 1.0, py::arg("w3") = 1.0);

  m.def(
      "orthogonality_loss",
      [](const DoubleArray& content, const DoubleArray& style) {
        return losses::orthogonality_loss(to_tensor(content), to_tensor(style)).item<double>();
      },
      py::arg("content"), py::arg("style"));

  m.def(
      "mutual_info_loss",
      [](const DoubleArray& u, const DoubleArray& v, double tau, int sign) {
        return losses::mutual_info_loss(to_tensor(u), to_tensor(v), tau, sign).item<double>();
      },
      py::arg("u"), py::arg("v"), py::arg("tau") = 0.1, py::arg("sign") = 1);

  m.def(
      "topk_contrastive_loss",
      [](const DoubleArray& audio_to_content, const DoubleArray& content_to_audio,
         std::int64_t k, double alpha_pos, double beta_neg, double lambda) {
        return losses::topk_contrastive_loss(
                   {to_tensor(audio_to_content), to_tensor(content_to_audio)}, k, alpha_pos,
                   beta_neg, lambda)
            .item<double>();
      },
      py::arg("audio_to_content"), py::arg("content_to_audio"), py::arg("k"),
      py::arg("alpha_pos") = 1.0, py::arg("beta_neg") = 1.0, py::arg("lambda_mix") = 0.5);

  m.def(
      "kl_alignment_loss",
      [](const DoubleArray& audio, const DoubleArray& motion) {
        return losses::kl_alignment_loss(losses::feature_moments(to_tensor(audio)),
                                         losses::feature_moments(to_tensor(motion)))
            .item<double>();
      },
      py::arg("audio_features"), py::arg("motion_features"));

  m.def(
      "contrastive_total",
      [](const DoubleArray& audio, const DoubleArray& motion, double tau, std::int64_t top_k,
         double lambda) {
        losses::LossWeights w;
        w.tau = tau;
        w.top_k = top_k;
        w.lambda = lambda;
        return losses::contrastive_total(to_tensor(audio), to_tensor(motion), w).item<double>();
      },
      py::arg("audio"), py::arg("motion"), py::arg("tau") = 0.1, py::arg("top_k") = 0,
      py::arg("lambda_mix") = 0.5);

  m.def(
      "motion_losses",
      [](const std::vector<DoubleArray>& pred, const std::vector<DoubleArray>& gt,
         const std::vector<std::int64_t>& lip_indices, double a1, double a2, double a3) {
        std::vector<torch::Tensor> p, g;
        for (const auto& x : pred) p.push_back(to_tensor(x));
        for (const auto& x : gt) g.push_back(to_tensor(x));
        auto terms = losses::motion_losses(p, g, lip_indices, a1, a2, a3);
        return py::make_tuple(terms.reconstruction.item<double>(), terms.mouth.item<double>(),
                              terms.velocity.item<double>(), terms.total.item<double>());
      },
      py::arg("pred"), py::arg("gt"), py::arg("lip_indices"), py::arg("alpha1") = 1.0,
      py::arg("alpha2") = 1.0, py::arg("alpha3") = 0.5,
      "Returns (reconstruction, mouth, velocity, total)");

  // metrics -----------------------------------------------------------------
  m.def(
      "lip_vertex_error",
      [](const DoubleArray& pred, const DoubleArray& gt,
         const std::vector<std::int64_t>& lips) {
        return metrics::lip_vertex_error(to_tensor(pred), to_tensor(gt), lips);
      },
      py::arg("pred"), py::arg("gt"), py::arg("lip_indices"));

  m.def(
      "upper_face_dynamics_deviation",
      [](const DoubleArray& pred, const DoubleArray& gt, const std::vector<std::int64_t>& upper,
         const DoubleArray& template_verts) {
        return metrics::upper_face_dynamics_deviation(to_tensor(pred), to_tensor(gt), upper,
                                                      to_tensor(template_verts));
      },
      py::arg("pred"), py::arg("gt"), py::arg("upper_face_indices"), py::arg("template_verts"));

  m.def(
      "style_silhouette",
      [](const DoubleArray& codes, const std::vector<std::int64_t>& labels) {
        return metrics::style_silhouette(to_tensor(codes), labels);
      },
      py::arg("style_codes"), py::arg("labels"));

  // synthetic corpus ----------------------------------------------------------
  m.def(
      "generate_corpus",
      [](const std::string& directory, std::int64_t sequences, std::int64_t frames,
         std::uint64_t seed) {
        auto summary = data::generate_corpus(directory, sequences, frames, seed,
                                             data::default_style_palette());
        py::dict d;
        d["sequences"] = summary.sequences;
        d["identities"] = summary.identities;
        d["train"] = summary.train;
        d["val"] = summary.val;
        d["test"] = summary.test;
        d["total_frames"] = summary.total_frames;
        return d;
      },
      py::arg("directory"), py::arg("sequences") = 200, py::arg("frames") = 75,
      py::arg("seed") = 7);

  // gradient checks -------------------------------------------------------
  m.def("gradcheck_all", [] {
    py::list rows;
    for (const auto& r : gradcheck::run_all()) {
      py::dict d;
      d["name"] = r.name;
      d["passed"] = r.passed;
      d["worst_ratio"] = r.worst_ratio;
      d["coordinates"] = r.coordinates;
      rows.append(d);
    }
    return rows;
  });
}
