#include "nrd/manifold.hpp"

#include <cmath>
#include <cstdio>
#include <string>

#include "nrd/binary_io.hpp"
#include "nrd/errors.hpp"

namespace nrd {

void RField::validate(Index cells) const {
  if (values.size() != cells)
    throw ConfigError("r field has " + std::to_string(values.size()) + " cells, grid has " + std::to_string(cells));
  for (Index i = 0; i < values.size(); ++i)
    if (!(values[i] > 0.0f && values[i] <= 1.0f)) throw ConfigError("r field entries must lie in (0, 1]");
}

StepCoeffs<float> RField::coeffs() const {
  StepCoeffs<float> c;
  c.d = CellField<float>(1.0f);
  c.r = CellField<float>(values);
  return c;
}

RField uniform_rfield(const Grid2D& g, float r) {
  RField f{Vector<float>::Constant(g.cells(), r)};
  f.validate(g.cells());
  return f;
}

RField radial_rfield(const Grid2D& g, float r_centre, float r_edge) {
  const double cy = (g.height - 1) / 2.0, cx = (g.width - 1) / 2.0;
  const double corner = std::sqrt(cy * cy + cx * cx);
  RField f{Vector<float>(g.cells())};
  for (int y = 0; y < g.height; ++y)
    for (int x = 0; x < g.width; ++x) {
      const double rho = corner > 0 ? std::sqrt((y - cy) * (y - cy) + (x - cx) * (x - cx)) / corner : 0.0;
      f.values[Index(y) * g.width + x] = static_cast<float>(r_centre + (r_edge - r_centre) * rho);
    }
  f.validate(g.cells());
  return f;
}

RField rfield_from_png(const std::filesystem::path& path, const Grid2D& g) {
  Image img = read_png(path);
  if (img.height != g.height || img.width != g.width)
    throw ConfigError("r field image " + path.string() + " is " + std::to_string(img.height) + "x" +
                      std::to_string(img.width) + ", grid is " + std::to_string(g.height) + "x" + std::to_string(g.width));
  RField f{img.data.row(0).transpose()};
  f.validate(g.cells());
  return f;
}

RField parse_rfield(const std::string& spec, const Grid2D& g) {
  if (spec == "radial") return radial_rfield(g);
  if (spec.rfind("uniform:", 0) == 0) {
    try {
      return uniform_rfield(g, std::stof(spec.substr(8)));
    } catch (const std::invalid_argument&) {
      throw ConfigError("bad r field value in '" + spec + "'");
    }
  }
  if (spec.rfind("file:", 0) == 0) return rfield_from_png(spec.substr(5), g);
  throw ConfigError("unknown r field '" + spec + "' (expected uniform:V, radial or file:PATH)");
}

ChemState<float> run_nonuniform_r(const RDModel<float>& model, ChemState<float> x0, const RField& rfield, int steps,
                                  int stride, const FrameCallback<float>& on_frame) {
  const auto* g = std::get_if<Grid2D>(&x0.domain);
  if (!g) throw ContractError("non-uniform r runs need a 2D grid");
  rfield.validate(x0.cells());
  try {
    return simulate(std::move(x0), model, rfield.coeffs(), steps, stride, on_frame);
  } catch (const DivergenceError& e) {
    const auto cell = e.cell();
    throw DivergenceError(e.step(), cell,
                          "y=" + std::to_string(cell / g->width) + ", x=" + std::to_string(cell % g->width) +
                              ", r=" + std::to_string(rfield.values[cell]));
  }
}

std::vector<double> radial_autocorrelation(const ChemState<float>& x, int channel, int max_radius) {
  const auto* g = std::get_if<Grid2D>(&x.domain);
  if (!g) throw ContractError("autocorrelation needs a 2D grid");
  if (channel < 0 || channel >= x.channels()) throw ContractError("autocorrelation channel out of range");
  const int H = g->height, W = g->width;
  std::vector<double> v(static_cast<std::size_t>(H) * W);
  double mean = 0.0;
  for (Index i = 0; i < x.cells(); ++i) mean += x.values(i, channel);
  mean /= double(x.cells());
  for (Index i = 0; i < x.cells(); ++i) v[i] = x.values(i, channel) - mean;

  std::vector<double> sum(max_radius + 1, 0.0);
  std::vector<int> count(max_radius + 1, 0);
  for (int dy = -max_radius; dy <= max_radius; ++dy)
    for (int dx = -max_radius; dx <= max_radius; ++dx) {
      const int bin = static_cast<int>(std::lround(std::sqrt(double(dy * dy + dx * dx))));
      if (bin > max_radius) continue;
      double acc = 0.0;
      for (int y = 0; y < H; ++y) {
        const double* row = v.data() + std::size_t(y) * W;
        const double* shifted = v.data() + std::size_t((y + dy + H) % H) * W;
        for (int xx = 0; xx < W; ++xx) acc += row[xx] * shifted[(xx + dx + W) % W];
      }
      sum[bin] += acc;
      ++count[bin];
    }
  std::vector<double> prof(max_radius + 1);
  for (int k = 0; k <= max_radius; ++k) prof[k] = sum[k] / count[k];
  const double c0 = prof[0];
  for (auto& p : prof) p = c0 > 0 ? p / c0 : 0.0;
  return prof;
}

std::optional<double> autocorrelation_length(const ChemState<float>& x, int channel) {
  const auto* g = std::get_if<Grid2D>(&x.domain);
  if (!g) throw ContractError("autocorrelation needs a 2D grid");
  const int max_r = std::min(g->height, g->width) / 2;
  auto prof = radial_autocorrelation(x, channel, max_r);
  if (!(prof[0] > 0.0)) return std::nullopt;
  for (int k = 1; k <= max_r; ++k)
    if (prof[k] <= 0.0) return (k - 1) + prof[k - 1] / (prof[k - 1] - prof[k]);
  return std::nullopt;
}

ChemState<float> run_mesh(const RDModel<float>& model, const MeshRef& mesh, const SeedSpec& seed, int steps,
                          int stride, const FrameCallback<float>& on_frame) {
  if (!mesh) throw ContractError("run_mesh needs a mesh");
  if (mesh->component_count() > 1)
    warn("mesh has " + std::to_string(mesh->component_count()) + " disconnected components; they evolve independently");
  auto x0 = make_seed<float>(seed, Domain{mesh}, model.channels());
  return simulate(std::move(x0), model, StepCoeffs<float>{}, steps, stride, on_frame);
}

ChemState<float> run_volume(const RDModel<float>& model, const Volume& dims, const SeedSpec& seed, int steps,
                            int stride, const FrameCallback<float>& on_frame) {
  if (dims.depth < 1 || dims.height < 1 || dims.width < 1) throw ConfigError("volume dimensions must be positive");
  auto x0 = make_seed<float>(seed, Domain{dims}, model.channels());
  return simulate(std::move(x0), model, StepCoeffs<float>{}, steps, stride, on_frame);
}

double rgb_variance(const ChemState<float>& x) {
  const Matrix<double> rgb = to_display_rgb(x).cast<double>();
  double total = 0.0;
  for (int c = 0; c < 3; ++c) {
    const double mean = rgb.row(c).mean();
    total += (rgb.row(c).array() - mean).square().mean();
  }
  return total / 3.0;
}

Image volume_slice(const ChemState<float>& state, int z) {
  const auto* v = std::get_if<Volume>(&state.domain);
  if (!v) throw ContractError("volume_slice needs a volume state");
  if (z < 0 || z >= v->depth) throw ContractError("slice index out of range");
  const Matrix<float> rgb = to_display_rgb(state);
  const Index plane = Index(v->height) * v->width;
  return Image(v->height, v->width, rgb.middleCols(Index(z) * plane, plane));
}

void write_volume_slices(const std::filesystem::path& dir, const ChemState<float>& state) {
  const auto* v = std::get_if<Volume>(&state.domain);
  if (!v) throw ContractError("write_volume_slices needs a volume state");
  std::filesystem::create_directories(dir);
  for (int z = 0; z < v->depth; ++z) {
    char name[32];
    std::snprintf(name, sizeof(name), "slice_%04d.png", z);
    write_png(dir / name, volume_slice(state, z));
  }
}

void write_voxels(const std::filesystem::path& path, const ChemState<float>& state) {
  const auto* v = std::get_if<Volume>(&state.domain);
  if (!v) throw ContractError("write_voxels needs a volume state");
  const Matrix<float> rgb = to_display_rgb(state);
  ByteWriter w;
  w.put_magic("RDVX");
  w.put(std::uint32_t{1});
  w.put(static_cast<std::uint32_t>(v->depth));
  w.put(static_cast<std::uint32_t>(v->height));
  w.put(static_cast<std::uint32_t>(v->width));
  w.put(std::uint32_t{1});
  for (Index i = 0; i < state.cells(); ++i) {
    bool white = true;
    for (int c = 0; c < 3; ++c) {
      const float val = rgb(c, i);
      white = white && val >= 1.0f - kWhiteTransparency;
      w.put(static_cast<std::uint8_t>(std::lround(val * 255.0f)));
    }
    w.put(static_cast<std::uint8_t>(white ? 0 : 255));
  }
  w.save(path);
}

}  // namespace nrd
