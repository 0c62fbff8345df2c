#include "nrd/model.hpp"

#include <string>

#include "nrd/errors.hpp"
#include "nrd/rng.hpp"

namespace nrd {

template <typename T>
void swish5_inplace(Matrix<T>& m) {
  auto a = m.array();
  a = a * (T(5) * a).logistic();
}

template <typename T>
void swish5_with_derivative(const Matrix<T>& z, Matrix<T>& act, Matrix<T>& slope) {
  const auto za = z.array();
  slope.resize(z.rows(), z.cols());
  act.resize(z.rows(), z.cols());
  slope.array() = (T(5) * za).logistic();
  act.array() = za * slope.array();
  // s + 5 z s (1 - s) = s + 5 act (1 - s)
  slope.array() += T(5) * act.array() * (T(1) - slope.array());
}

template <typename T>
ReactionParams<T> ReactionParams<T>::zeros(int channels, int hidden) {
  return {Matrix<T>::Zero(channels, hidden), Vector<T>::Zero(hidden), Matrix<T>::Zero(hidden, channels)};
}

template <typename T>
void ReactionParams<T>::validate() const {
  if (w0.rows() < 1 || w0.cols() < 1) throw ContractError("reaction W0 is empty");
  if (b0.size() != w0.cols()) throw ContractError("reaction b0 length does not match hidden width");
  if (w1.rows() != w0.cols() || w1.cols() != w0.rows())
    throw ContractError("reaction W1 must be h x n with W0 n x h");
}

template <typename T>
DiffusionSpec<T> DiffusionSpec<T>::fixed(Vector<T> c) {
  return {DiffusionMode::fixed, std::move(c)};
}

template <typename T>
DiffusionSpec<T> DiffusionSpec<T>::learned(Vector<T> logits) {
  return {DiffusionMode::learned, std::move(logits)};
}

template <typename T>
DiffusionSpec<T> DiffusionSpec<T>::grouped(int channels) {
  Vector<T> c(channels);
  const T levels[4] = {T(1) / 8, T(1) / 4, T(1) / 2, T(1)};
  for (int i = 0; i < channels; ++i) c[i] = levels[std::min(3, 4 * i / channels)];
  return fixed(std::move(c));
}

template <typename T>
Vector<T> DiffusionSpec<T>::coefficients() const {
  if (mode == DiffusionMode::fixed) return values;
  return (T(1) + (-values.array()).exp()).inverse().matrix();
}

template <typename T>
void DiffusionSpec<T>::validate(int channels) const {
  if (values.size() != channels)
    throw ContractError("diffusion spec has " + std::to_string(values.size()) + " entries for " +
                        std::to_string(channels) + " channels");
  if (mode == DiffusionMode::fixed) {
    for (Index i = 0; i < values.size(); ++i)
      if (!(values[i] > T(0) && values[i] <= T(1)))
        throw ContractError("fixed diffusion coefficient " + std::to_string(i) + " outside (0, 1]");
  } else if (!values.allFinite()) {
    throw ContractError("diffusion logits must be finite");
  }
}

template <typename T>
void RDModel<T>::validate() const {
  reaction.validate();
  if (channels() < 3) throw ContractError("model needs at least 3 channels for the RGB readout");
  diffusion.validate(channels());
}

template <typename T>
RDModel<T> make_model(const ModelInit& init) {
  if (init.channels < 3 || init.hidden < 1) throw ConfigError("model needs channels >= 3 and hidden >= 1");
  Rng rng = substream(init.seed, Stream::model_init);
  RDModel<T> m;
  m.reaction = ReactionParams<T>::zeros(init.channels, init.hidden);
  const double limit = std::sqrt(6.0 / (init.channels + init.hidden));
  std::uniform_real_distribution<double> u0(-limit, limit);
  for (Index i = 0; i < m.reaction.w0.size(); ++i) m.reaction.w0.data()[i] = T(u0(rng));
  if (init.w1_scale > 0.0) {
    std::uniform_real_distribution<double> u1(-init.w1_scale, init.w1_scale);
    for (Index i = 0; i < m.reaction.w1.size(); ++i) m.reaction.w1.data()[i] = T(u1(rng));
  }
  m.diffusion = DiffusionSpec<T>::grouped(init.channels);
  if (init.diffusion == DiffusionMode::learned) {
    Vector<T> logits = m.diffusion.values.unaryExpr([](T c) {
      // logit(1) is infinite; start the fastest group just below it.
      T cc = std::min(c, T(0.99));
      return std::log(cc / (T(1) - cc));
    });
    m.diffusion = DiffusionSpec<T>::learned(std::move(logits));
  }
  return m;
}

template <typename T>
Matrix<T> reaction_preactivation(const Matrix<T>& x, const ReactionParams<T>& p) {
  if (x.cols() != p.channels())
    throw ContractError("reaction input has " + std::to_string(x.cols()) + " columns, expected " +
                        std::to_string(p.channels()));
  Matrix<T> z = x * p.w0;
  z.rowwise() += p.b0.transpose();
  return z;
}

template <typename T>
Matrix<T> reaction_forward(const Matrix<T>& x, const ReactionParams<T>& p) {
  Matrix<T> h = reaction_preactivation(x, p);
  swish5_inplace(h);
  return h * p.w1;
}

template <typename T>
Matrix<T> to_rgb(const ChemState<T>& x) {
  if (x.channels() < 3) throw ContractError("RGB readout needs at least 3 channels");
  return x.values.leftCols(3).transpose();
}

template <typename T>
Matrix<T> to_display_rgb(const ChemState<T>& x) {
  return to_rgb(x).cwiseMax(T(0)).cwiseMin(T(1));
}

#define NRD_INSTANTIATE(T)                                                        \
  template void swish5_inplace<T>(Matrix<T>&);                                    \
  template void swish5_with_derivative<T>(const Matrix<T>&, Matrix<T>&, Matrix<T>&); \
  template struct ReactionParams<T>;                                              \
  template struct DiffusionSpec<T>;                                               \
  template struct RDModel<T>;                                                     \
  template RDModel<T> make_model<T>(const ModelInit&);                            \
  template Matrix<T> reaction_preactivation<T>(const Matrix<T>&, const ReactionParams<T>&); \
  template Matrix<T> reaction_forward<T>(const Matrix<T>&, const ReactionParams<T>&);       \
  template Matrix<T> to_rgb<T>(const ChemState<T>&);                              \
  template Matrix<T> to_display_rgb<T>(const ChemState<T>&);

NRD_INSTANTIATE(float)
NRD_INSTANTIATE(double)

}  // namespace nrd
