#include "nrd/step.hpp"

#include <string>

#include "nrd/errors.hpp"
#include "nrd/laplacian.hpp"

namespace nrd {

template <typename T>
void StepCoeffs<T>::validate(Index cells) const {
  if (!d.is_uniform() && d.per_cell.size() != cells) throw ContractError("per-cell d does not match cell count");
  if (!r.is_uniform() && r.per_cell.size() != cells) throw ContractError("per-cell r does not match cell count");
  if (!(d.min() > T(0))) throw ContractError("diffusion rate d must be positive");
  if (!(r.min() >= T(0))) throw ContractError("reaction rate r must be non-negative");
}

namespace detail {

template <typename T>
Index first_nonfinite_cell(const Matrix<T>& x) {
  for (Index i = 0; i < x.rows(); ++i)
    if (!x.row(i).allFinite()) return i;
  return -1;
}

template <typename T>
void euler_update(const Domain& domain, const Matrix<T>& x, const RDModel<T>& model, const Vector<T>& c,
                  const StepCoeffs<T>& coeffs, Matrix<T>& next, StepWorkspace<T>& ws, Matrix<T>* preact) {
  const auto& p = model.reaction;
  laplacian(domain, x, ws.lap);

  Matrix<T>& z = preact ? *preact : ws.hidden;
  z.noalias() = x * p.w0;
  z.rowwise() += p.b0.transpose();
  if (preact) {
    ws.hidden.resize(z.rows(), z.cols());
    ws.hidden.array() = z.array() * (T(5) * z.array()).logistic();
  } else {
    swish5_inplace(z);
  }
  next.noalias() = ws.hidden * p.w1;

  const Index cells = x.rows();
  if (coeffs.d.is_uniform() && coeffs.r.is_uniform()) {
    const T r = coeffs.r.uniform;
    const Eigen::Matrix<T, 1, Eigen::Dynamic> cd = (c * coeffs.d.uniform).transpose();
    next.array() = x.array() + r * next.array() + ws.lap.array().rowwise() * cd.array();
  } else {
    for (Index i = 0; i < cells; ++i) {
      const T r = coeffs.r[i], d = coeffs.d[i];
      next.row(i) = x.row(i) + r * next.row(i) + d * ws.lap.row(i).cwiseProduct(c.transpose());
    }
  }
}

}  // namespace detail

template <typename T>
ChemState<T> euler_step(const ChemState<T>& x, const RDModel<T>& model, const StepCoeffs<T>& coeffs,
                        int step_index) {
  if (x.channels() != model.channels())
    throw ContractError("state has " + std::to_string(x.channels()) + " channels, model expects " +
                        std::to_string(model.channels()));
  coeffs.validate(x.cells());
  ChemState<T> out;
  out.domain = x.domain;
  detail::StepWorkspace<T> ws;
  detail::euler_update(x.domain, x.values, model, model.diffusion.coefficients(), coeffs, out.values, ws,
                       static_cast<Matrix<T>*>(nullptr));
  if (!out.values.allFinite()) throw DivergenceError(step_index, detail::first_nonfinite_cell(out.values));
  return out;
}

template <typename T>
ChemState<T> simulate(ChemState<T> x, const RDModel<T>& model, const StepCoeffs<T>& coeffs, int steps, int stride,
                      const FrameCallback<T>& on_frame) {
  model.validate();
  if (x.channels() != model.channels())
    throw ContractError("state has " + std::to_string(x.channels()) + " channels, model expects " +
                        std::to_string(model.channels()));
  coeffs.validate(x.cells());
  const Vector<T> c = model.diffusion.coefficients();
  detail::StepWorkspace<T> ws;
  Matrix<T> next;
  for (int s = 1; s <= steps; ++s) {
    detail::euler_update(x.domain, x.values, model, c, coeffs, next, ws, static_cast<Matrix<T>*>(nullptr));
    if (!next.allFinite()) throw DivergenceError(s, detail::first_nonfinite_cell(next));
    x.values.swap(next);
    if (stride > 0 && on_frame && s % stride == 0) on_frame(s, x);
  }
  return x;
}

#define NRD_INSTANTIATE(T)                                                                                \
  template struct StepCoeffs<T>;                                                                          \
  template ChemState<T> euler_step<T>(const ChemState<T>&, const RDModel<T>&, const StepCoeffs<T>&, int); \
  template ChemState<T> simulate<T>(ChemState<T>, const RDModel<T>&, const StepCoeffs<T>&, int, int,     \
                                    const FrameCallback<T>&);                                            \
  template Index detail::first_nonfinite_cell<T>(const Matrix<T>&);                                        \
  template void detail::euler_update<T>(const Domain&, const Matrix<T>&, const RDModel<T>&, const Vector<T>&, \
                                        const StepCoeffs<T>&, Matrix<T>&, detail::StepWorkspace<T>&, Matrix<T>*);

NRD_INSTANTIATE(float)
NRD_INSTANTIATE(double)

}  // namespace nrd
