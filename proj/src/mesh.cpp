#include "talkmesh/mesh.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

namespace talkmesh {

namespace {

using json = nlohmann::json;

void check_index(std::int64_t idx, std::int64_t n, const char* what) {
  if (idx < 0 || idx >= n) {
    throw InputError(std::string(what) + " index " + std::to_string(idx) +
                     " out of range [0, " + std::to_string(n) + ")");
  }
}

std::vector<bool> mask_from_indices(const std::vector<std::int64_t>& idx, std::int64_t n,
                                    const char* what) {
  std::vector<bool> mask(static_cast<std::size_t>(n), false);
  for (auto i : idx) {
    check_index(i, n, what);
    mask[static_cast<std::size_t>(i)] = true;
  }
  return mask;
}

void write_u32(std::ostream& os, std::uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

std::uint32_t read_u32(std::istream& is) {
  unsigned char b[4];
  is.read(reinterpret_cast<char*>(b), 4);
  return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
         (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

void write_f32(std::ostream& os, float v) {
  std::uint32_t u;
  std::memcpy(&u, &v, 4);
  write_u32(os, u);
}

float read_f32(std::istream& is) {
  std::uint32_t u = read_u32(is);
  float v;
  std::memcpy(&v, &u, 4);
  return v;
}

constexpr char kMeshMagic[4] = {'P', 'T', 'K', 'M'};
constexpr unsigned char kMeshVersion = 1;

}  // namespace

void MeshTopology::validate() const {
  if (vertex_count <= 0) throw InputError("topology: vertex_count must be positive");
  std::set<Edge> seen;
  for (const auto& e : edges) {
    check_index(e.first, vertex_count, "edge");
    check_index(e.second, vertex_count, "edge");
    if (e.first == e.second) throw InputError("topology: self-loop stored in edge set");
    if (e.first > e.second) throw InputError("topology: edge pair not normalized");
    if (!seen.insert(e).second) throw InputError("topology: duplicate edge");
  }
  for (const auto& f : faces) {
    for (auto idx : f) check_index(idx, vertex_count, "face");
  }
  auto n = static_cast<std::size_t>(vertex_count);
  if (!lip_mask.empty() && lip_mask.size() != n) {
    throw InputError("topology: lip_mask length mismatch");
  }
  if (!upper_face_mask.empty() && upper_face_mask.size() != n) {
    throw InputError("topology: upper_face_mask length mismatch");
  }
  if (!lip_mask.empty() && !upper_face_mask.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      if (lip_mask[i] && upper_face_mask[i]) {
        throw InputError("topology: lip_mask and upper_face_mask intersect at vertex " +
                         std::to_string(i));
      }
    }
  }
}

std::vector<std::int64_t> MeshTopology::lip_indices() const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < lip_mask.size(); ++i) {
    if (lip_mask[i]) out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

std::vector<std::int64_t> MeshTopology::upper_face_indices() const {
  std::vector<std::int64_t> out;
  for (std::size_t i = 0; i < upper_face_mask.size(); ++i) {
    if (upper_face_mask[i]) out.push_back(static_cast<std::int64_t>(i));
  }
  return out;
}

void MotionSequence::validate() const {
  if (frames.dim() != 3 || frames.size(2) != 3) {
    throw InputError("motion sequence must be T x N_v x 3");
  }
  if (frames.size(0) < 1) throw InputError("motion sequence needs at least one frame");
  if (fps <= 0.0f) throw InputError("fps must be positive");
  require_finite(frames, "motion sequence");
}

std::vector<Edge> derive_edges(const std::vector<std::array<std::int64_t, 3>>& faces,
                               std::int64_t vertex_count) {
  std::set<Edge> edges;
  for (const auto& f : faces) {
    for (auto idx : f) check_index(idx, vertex_count, "face");
    for (int i = 0; i < 3; ++i) {
      std::int64_t a = f[static_cast<std::size_t>(i)];
      std::int64_t b = f[static_cast<std::size_t>((i + 1) % 3)];
      if (a == b) continue;
      edges.emplace(std::min(a, b), std::max(a, b));
    }
  }
  return {edges.begin(), edges.end()};
}

MeshTopology load_topology(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("cannot open topology file: " + path);
  json j;
  try {
    is >> j;
  } catch (const json::exception& e) {
    throw IoError("topology parse error in " + path + ": " + e.what());
  }
  MeshTopology topo;
  try {
    topo.vertex_count = j.at("vertex_count").get<std::int64_t>();
    for (const auto& f : j.value("faces", json::array())) {
      topo.faces.push_back({f.at(0).get<std::int64_t>(), f.at(1).get<std::int64_t>(),
                            f.at(2).get<std::int64_t>()});
    }
    if (j.contains("lip_mask")) {
      topo.lip_mask = mask_from_indices(j["lip_mask"].get<std::vector<std::int64_t>>(),
                                        topo.vertex_count, "lip_mask");
    }
    if (j.contains("upper_face_mask")) {
      topo.upper_face_mask = mask_from_indices(
          j["upper_face_mask"].get<std::vector<std::int64_t>>(), topo.vertex_count,
          "upper_face_mask");
    }
  } catch (const json::exception& e) {
    throw IoError("topology field error in " + path + ": " + e.what());
  }
  topo.edges = derive_edges(topo.faces, topo.vertex_count);
  topo.validate();
  return topo;
}

void save_topology(const MeshTopology& topo, const std::string& path) {
  topo.validate();
  json j;
  j["vertex_count"] = topo.vertex_count;
  auto faces = json::array();
  for (const auto& f : topo.faces) faces.push_back({f[0], f[1], f[2]});
  j["faces"] = faces;
  auto lips = topo.lip_indices();
  auto upper = topo.upper_face_indices();
  if (!lips.empty()) j["lip_mask"] = lips;
  if (!upper.empty()) j["upper_face_mask"] = upper;
  std::ofstream os(path);
  if (!os) throw IoError("cannot write topology file: " + path);
  os << j.dump(2) << "\n";
}

void write_mesh_sequence(const MotionSequence& seq, const std::string& path) {
  seq.validate();
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot write mesh sequence: " + path);
  os.write(kMeshMagic, 4);
  os.put(static_cast<char>(kMeshVersion));
  write_u32(os, static_cast<std::uint32_t>(seq.vertex_count()));
  write_u32(os, static_cast<std::uint32_t>(seq.frame_count()));
  write_f32(os, seq.fps);
  auto flat = seq.frames.to(torch::kFloat32).contiguous();
  os.write(reinterpret_cast<const char*>(flat.data_ptr<float>()),
           static_cast<std::streamsize>(flat.numel() * sizeof(float)));
  if (!os) throw IoError("short write on mesh sequence: " + path);
}

MotionSequence read_mesh_sequence(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open mesh sequence: " + path);
  char magic[4];
  is.read(magic, 4);
  if (!is || std::memcmp(magic, kMeshMagic, 4) != 0) {
    throw IoError("corrupt mesh sequence header (bad magic): " + path);
  }
  int version = is.get();
  if (version != kMeshVersion) {
    throw IoError("unsupported mesh sequence version " + std::to_string(version) + ": " + path);
  }
  std::uint32_t nv = read_u32(is);
  std::uint32_t t = read_u32(is);
  float fps = read_f32(is);
  if (!is || nv == 0 || t == 0 || !(fps > 0.0f)) {
    throw IoError("corrupt mesh sequence header: " + path);
  }
  MotionSequence seq;
  seq.fps = fps;
  seq.frames = torch::empty({static_cast<std::int64_t>(t), static_cast<std::int64_t>(nv), 3},
                            torch::kFloat32);
  is.read(reinterpret_cast<char*>(seq.frames.data_ptr<float>()),
          static_cast<std::streamsize>(seq.frames.numel() * sizeof(float)));
  if (is.gcount() != static_cast<std::streamsize>(seq.frames.numel() * sizeof(float))) {
    throw IoError("truncated mesh sequence payload: " + path);
  }
  return seq;
}

}  // namespace talkmesh
