#include "talkmesh/evaluation.hpp"

#include <filesystem>

namespace talkmesh {

metrics::EvalReport evaluate_split(const Model& model, const data::Corpus& corpus,
                                   const std::string& split, std::int64_t refresh_every) {
  metrics::EvalReport report;
  auto indices = corpus.split_indices(split);
  if (indices.empty()) throw InputError("evaluation split '" + split + "' is empty");

  auto lips = corpus.topology().lip_indices();
  auto upper = corpus.topology().upper_face_indices();
  std::vector<torch::Tensor> style_codes;
  std::vector<std::int64_t> labels;

  double lve_sum = 0.0;
  double fdd_sum = 0.0;
  for (auto idx : indices) {
    auto ex = corpus.load(idx);
    auto generated = model.generate(ex.audio, ex.identity, ex.template_verts,
                                    ex.motion.frame_count(), std::nullopt, refresh_every,
                                    ex.motion.fps);
    metrics::SequenceEval row;
    row.name = std::filesystem::path(corpus.entry(idx).mesh_path).filename().string();
    row.lve = metrics::lip_vertex_error(generated.frames, ex.motion.frames, lips);
    row.fdd = metrics::upper_face_dynamics_deviation(generated.frames, ex.motion.frames, upper,
                                                     ex.template_verts);
    report.per_sequence.push_back(row);
    lve_sum += row.lve;
    fdd_sum += row.fdd;

    auto feats = model.encode_features(ex);
    style_codes.push_back(feats.style_fused);
    labels.push_back(ex.identity.index);
  }
  report.lve = lve_sum / static_cast<double>(indices.size());
  report.fdd = fdd_sum / static_cast<double>(indices.size());
  report.style_silhouette = metrics::style_silhouette(torch::stack(style_codes), labels);
  return report;
}

}  // namespace talkmesh
