#include "nrd/laplacian.hpp"

#include <string>

#include "nrd/errors.hpp"

namespace nrd {

namespace {

template <typename T>
void check_shape(Index cells, const Matrix<T>& x, const char* kind) {
  if (x.rows() != cells)
    throw ContractError(std::string(kind) + " Laplacian: state has " + std::to_string(x.rows()) +
                        " cells, domain has " + std::to_string(cells));
}

}  // namespace

template <typename T>
void laplacian_grid2d(const Grid2D& g, const Matrix<T>& x, Matrix<T>& out) {
  check_shape(g.cells(), x, "grid2d");
  const Index n = x.cols();
  out.resize(x.rows(), n);
  const int H = g.height, W = g.width;
  const T* src = x.data();
  T* dst = out.data();
  const T edge = T(2) / T(16), corner = T(1) / T(16), centre = T(-12) / T(16);
#pragma omp parallel for schedule(static)
  for (int y = 0; y < H; ++y) {
    const int yu = (y + H - 1) % H, yd = (y + 1) % H;
    for (int xx = 0; xx < W; ++xx) {
      const int xl = (xx + W - 1) % W, xr = (xx + 1) % W;
      const T* c = src + (Index(y) * W + xx) * n;
      const T* u = src + (Index(yu) * W + xx) * n;
      const T* d = src + (Index(yd) * W + xx) * n;
      const T* l = src + (Index(y) * W + xl) * n;
      const T* r = src + (Index(y) * W + xr) * n;
      const T* ul = src + (Index(yu) * W + xl) * n;
      const T* ur = src + (Index(yu) * W + xr) * n;
      const T* dl = src + (Index(yd) * W + xl) * n;
      const T* dr = src + (Index(yd) * W + xr) * n;
      T* o = dst + (Index(y) * W + xx) * n;
      for (Index k = 0; k < n; ++k)
        o[k] = edge * (u[k] + d[k] + l[k] + r[k]) + corner * (ul[k] + ur[k] + dl[k] + dr[k]) + centre * c[k];
    }
  }
}

template <typename T>
void laplacian_volume(const Volume& v, const Matrix<T>& x, Matrix<T>& out) {
  check_shape(v.cells(), x, "volume");
  const Index n = x.cols();
  out.resize(x.rows(), n);
  const int D = v.depth, H = v.height, W = v.width;
  const T* src = x.data();
  T* dst = out.data();
  const T face = T(1) / T(6);
  auto at = [&](int z, int y, int xx) { return src + ((Index(z) * H + y) * W + xx) * n; };
#pragma omp parallel for schedule(static)
  for (int z = 0; z < D; ++z) {
    const int zb = (z + D - 1) % D, zf = (z + 1) % D;
    for (int y = 0; y < H; ++y) {
      const int yu = (y + H - 1) % H, yd = (y + 1) % H;
      for (int xx = 0; xx < W; ++xx) {
        const int xl = (xx + W - 1) % W, xr = (xx + 1) % W;
        const T *c = at(z, y, xx), *a = at(zb, y, xx), *b = at(zf, y, xx), *u = at(z, yu, xx), *d = at(z, yd, xx),
                *l = at(z, y, xl), *r = at(z, y, xr);
        T* o = dst + ((Index(z) * H + y) * W + xx) * n;
        for (Index k = 0; k < n; ++k) o[k] = face * (a[k] + b[k] + u[k] + d[k] + l[k] + r[k]) - c[k];
      }
    }
  }
}

template <typename T>
void laplacian_mesh(const MeshGraph& m, const Matrix<T>& x, Matrix<T>& out) {
  check_shape(m.vertex_count(), x, "mesh");
  const Index n = x.cols();
  out.resize(x.rows(), n);
  const T* src = x.data();
  T* dst = out.data();
#pragma omp parallel for schedule(static)
  for (int v = 0; v < m.vertex_count(); ++v) {
    T* o = dst + Index(v) * n;
    const T* xv = src + Index(v) * n;
    for (Index k = 0; k < n; ++k) o[k] = T(0);
    auto nb = m.neighbors(v);
    auto w = m.weights(v);
    for (std::size_t j = 0; j < nb.size(); ++j) {
      const T wj = T(w[j]);
      const T* xu = src + Index(nb[j]) * n;
      for (Index k = 0; k < n; ++k) o[k] += wj * (xu[k] - xv[k]);
    }
  }
}

template <typename T>
void laplacian(const Domain& domain, const Matrix<T>& x, Matrix<T>& out) {
  if (auto* g = std::get_if<Grid2D>(&domain)) return laplacian_grid2d(*g, x, out);
  if (auto* v = std::get_if<Volume>(&domain)) return laplacian_volume(*v, x, out);
  const auto& mesh = std::get<MeshRef>(domain);
  if (!mesh) throw ContractError("mesh domain without a graph");
  laplacian_mesh(*mesh, x, out);
}

#define NRD_INSTANTIATE(T)                                                             \
  template void laplacian_grid2d<T>(const Grid2D&, const Matrix<T>&, Matrix<T>&);      \
  template void laplacian_volume<T>(const Volume&, const Matrix<T>&, Matrix<T>&);      \
  template void laplacian_mesh<T>(const MeshGraph&, const Matrix<T>&, Matrix<T>&);     \
  template void laplacian<T>(const Domain&, const Matrix<T>&, Matrix<T>&);

NRD_INSTANTIATE(float)
NRD_INSTANTIATE(double)

}  // namespace nrd
