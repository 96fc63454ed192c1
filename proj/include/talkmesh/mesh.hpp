#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <torch/torch.h>

#include "talkmesh/common.hpp"

namespace talkmesh {

using Edge = std::pair<std::int64_t, std::int64_t>;

/// Static graph structure of the face mesh: vertex count, undirected edge
/// set and the lip / upper-face vertex memberships used by losses and
/// metrics. Self-loops are never stored; the graph encoder adds them.
struct MeshTopology {
  std::int64_t vertex_count = 0;
  std::vector<Edge> edges;                        // unordered pairs, a < b, deduped
  std::vector<std::array<std::int64_t, 3>> faces; // optional source triangles
  std::vector<bool> lip_mask;
  std::vector<bool> upper_face_mask;

  void validate() const;

  std::vector<std::int64_t> lip_indices() const;
  std::vector<std::int64_t> upper_face_indices() const;
};

/// T frames of per-vertex 3D positions, millimeters.
struct MotionSequence {
  torch::Tensor frames;  // T x N_v x 3
  float fps = 25.0f;

  std::int64_t frame_count() const { return frames.size(0); }
  std::int64_t vertex_count() const { return frames.size(1); }
  void validate() const;
};

/// Deduplicated undirected edge set of a triangle list.
std::vector<Edge> derive_edges(const std::vector<std::array<std::int64_t, 3>>& faces,
                               std::int64_t vertex_count);

/// Topology document (JSON): vertex_count, faces, optional lip / upper-face
/// index arrays. Edges are derived from the faces on load.
MeshTopology load_topology(const std::string& path);
void save_topology(const MeshTopology& topo, const std::string& path);

// Mesh sequence container: magic "PTKM", version byte, little-endian header
// (N_v u32, T u32, fps f32), then T*N_v*3 float32 values frame-major.
void write_mesh_sequence(const MotionSequence& seq, const std::string& path);
MotionSequence read_mesh_sequence(const std::string& path);

}  // namespace talkmesh
