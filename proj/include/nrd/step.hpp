#pragma once

#include "nrd/model.hpp"

namespace nrd {

// A coefficient that is either one value for every cell or one value per cell.
template <typename T>
struct CellField {
  T uniform = T(1);
  Vector<T> per_cell;

  CellField() = default;
  CellField(T value) : uniform(value) {}  // NOLINT(google-explicit-constructor)
  explicit CellField(Vector<T> values) : per_cell(std::move(values)) {}

  bool is_uniform() const { return per_cell.size() == 0; }
  T operator[](Index cell) const { return is_uniform() ? uniform : per_cell[cell]; }
  T min() const { return is_uniform() ? uniform : per_cell.minCoeff(); }
};

// d = dt / dh^2 scales diffusion, r = dt scales reaction. Training uses 1, 1.
template <typename T>
struct StepCoeffs {
  CellField<T> d{T(1)};
  CellField<T> r{T(1)};

  void validate(Index cells) const;
};

// x + (c * d) . lap(x) + r . f(x), all cells from the same time-t state.
// Throws DivergenceError(step_index, cell) if any output value is non-finite.
template <typename T>
ChemState<T> euler_step(const ChemState<T>& x, const RDModel<T>& model, const StepCoeffs<T>& coeffs,
                        int step_index = 0);

namespace detail {

// Scratch buffers reused across steps.
template <typename T>
struct StepWorkspace {
  Matrix<T> lap;
  Matrix<T> hidden;
};

// next = euler_step(x). When `preact` is non-null it receives x W0 + b0.
// `c` are the effective diffusion coefficients.
template <typename T>
void euler_update(const Domain& domain, const Matrix<T>& x, const RDModel<T>& model, const Vector<T>& c,
                  const StepCoeffs<T>& coeffs, Matrix<T>& next, StepWorkspace<T>& ws, Matrix<T>* preact);

// Index of the first cell holding a non-finite value, or -1.
template <typename T>
Index first_nonfinite_cell(const Matrix<T>& x);

}  // namespace detail

}  // namespace nrd

#include <functional>

namespace nrd {

template <typename T>
using FrameCallback = std::function<void(int step, const ChemState<T>& state)>;

// Runs `steps` Euler steps with double buffering. When stride > 0 the
// callback sees the state after every stride-th step. Throws DivergenceError
// carrying the 1-based step index.
template <typename T>
ChemState<T> simulate(ChemState<T> x, const RDModel<T>& model, const StepCoeffs<T>& coeffs, int steps,
                      int stride = 0, const FrameCallback<T>& on_frame = {});

}  // namespace nrd
