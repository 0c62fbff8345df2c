#pragma once

#include <filesystem>
#include <optional>
#include <string>

#include "nrd/image.hpp"
#include "nrd/seed.hpp"
#include "nrd/step.hpp"

namespace nrd {

// Per-cell reaction rate r in (0, 1]; d stays 1 so the local grid spacing is
// sqrt(r).
struct RField {
  Vector<float> values;

  void validate(Index cells) const;
  StepCoeffs<float> coeffs() const;
};

RField uniform_rfield(const Grid2D& g, float r);
// r falls linearly with distance from the grid centre, from r_centre there
// to r_edge at the corners.
RField radial_rfield(const Grid2D& g, float r_centre = 1.0f, float r_edge = 1.0f / 9.0f);
// First channel of a PNG of the grid's size, used verbatim as r.
RField rfield_from_png(const std::filesystem::path& path, const Grid2D& g);
// "uniform:V", "radial" or "file:PATH".
RField parse_rfield(const std::string& spec, const Grid2D& g);

// Euler steps with per-cell r and d = 1. Divergence is rethrown with the
// failing cell's (y, x) coordinates in the message.
ChemState<float> run_nonuniform_r(const RDModel<float>& model, ChemState<float> x0, const RField& rfield, int steps,
                                  int stride = 0, const FrameCallback<float>& on_frame = {});

// First zero crossing radius (pixels, linearly interpolated) of the radially
// averaged periodic autocorrelation of one channel of a grid state. Empty if
// the profile stays positive out to half the grid size.
std::optional<double> autocorrelation_length(const ChemState<float>& x, int channel = 1);
// Radially averaged autocorrelation, normalised so that entry 0 is 1.
std::vector<double> radial_autocorrelation(const ChemState<float>& x, int channel, int max_radius);

ChemState<float> run_mesh(const RDModel<float>& model, const MeshRef& mesh, const SeedSpec& seed, int steps,
                          int stride = 0, const FrameCallback<float>& on_frame = {});

ChemState<float> run_volume(const RDModel<float>& model, const Volume& dims, const SeedSpec& seed, int steps,
                            int stride = 0, const FrameCallback<float>& on_frame = {});

// Variance of the display RGB across cells, averaged over the 3 channels.
double rgb_variance(const ChemState<float>& x);

struct TriangleMesh {
  std::vector<Vec3> positions;
  std::vector<std::array<int, 3>> faces;

  // Edges of every face, deduplicated, default weights.
  MeshGraph graph() const;
};

// Unit cube split into 12 triangles (8 vertices).
TriangleMesh make_cube_mesh();
// Regular triangulated torus with `ring` x `tube` vertices.
TriangleMesh make_torus_mesh(int ring, int tube, double major_radius = 1.0, double minor_radius = 0.35);

// OBJ input: "v" and "f" records (v/vt/vn and negative indices accepted);
// polygon edges are deduplicated.
MeshGraph read_obj(const std::filesystem::path& path);
void write_obj(const std::filesystem::path& path, const TriangleMesh& mesh);
// ASCII PLY with per-vertex uchar RGB from the clamped readout.
void write_ply(const std::filesystem::path& path, const MeshGraph& mesh, const ChemState<float>& state);

// Slice z of a volume state as an RGB image (display clamped).
Image volume_slice(const ChemState<float>& state, int z);
// Writes slice_0000.png ... for every z.
void write_volume_slices(const std::filesystem::path& dir, const ChemState<float>& state);

// Voxels whose RGB is within this distance (per channel) of white are
// written fully transparent.
inline constexpr float kWhiteTransparency = 0.1f;

// "RDVX" u32 version, u32 depth, u32 height, u32 width, u32 dtype (1 = rgba8),
// then depth*height*width RGBA bytes in z, y, x order.
void write_voxels(const std::filesystem::path& path, const ChemState<float>& state);

}  // namespace nrd
