#pragma once

#include <string>

#include "talkmesh/data.hpp"
#include "talkmesh/metrics.hpp"
#include "talkmesh/model.hpp"

namespace talkmesh {

/// Runs the inference path (audio + identity -> motion) for every sequence
/// in the split, scores it against ground truth and computes the style
/// cluster separation over fused style codes of the split.
metrics::EvalReport evaluate_split(const Model& model, const data::Corpus& corpus,
                                   const std::string& split, std::int64_t refresh_every = 0);

}  // namespace talkmesh
