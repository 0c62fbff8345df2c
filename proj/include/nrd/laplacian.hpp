#pragma once

#include "nrd/model.hpp"

namespace nrd {

// Discrete Laplacians applied independently to every channel (column) of a
// cells x channels matrix. All three are zero-sum and symmetric, so each is
// its own adjoint.
//
//   grid2d: (1/16) [[1, 2, 1], [2, -12, 2], [1, 2, 1]], periodic.
//   volume: 1/6 on the six face neighbours, -1 at the centre, periodic.
//   mesh:   sum_u w_uv (x_u - x_v) over the vertex neighbourhood.

template <typename T>
void laplacian_grid2d(const Grid2D& g, const Matrix<T>& x, Matrix<T>& out);
template <typename T>
void laplacian_volume(const Volume& v, const Matrix<T>& x, Matrix<T>& out);
template <typename T>
void laplacian_mesh(const MeshGraph& m, const Matrix<T>& x, Matrix<T>& out);

// Dispatch on the domain kind. `out` is resized as needed and must not alias x.
template <typename T>
void laplacian(const Domain& domain, const Matrix<T>& x, Matrix<T>& out);

template <typename T>
ChemState<T> laplacian(const ChemState<T>& x) {
  ChemState<T> out;
  out.domain = x.domain;
  laplacian(x.domain, x.values, out.values);
  return out;
}

}  // namespace nrd
