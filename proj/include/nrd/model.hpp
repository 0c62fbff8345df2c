#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>

#include "nrd/domain.hpp"

namespace nrd {

// Field of per-cell "chemical concentrations". values is cells x channels.
template <typename T>
struct ChemState {
  Domain domain;
  Matrix<T> values;

  ChemState() = default;
  ChemState(Domain d, int channels) : domain(std::move(d)), values(Matrix<T>::Zero(cell_count(domain), channels)) {}
  ChemState(Domain d, Matrix<T> v);

  int channels() const { return static_cast<int>(values.cols()); }
  Index cells() const { return values.rows(); }
  bool all_finite() const { return values.allFinite(); }

  template <typename U>
  ChemState<U> cast() const {
    return ChemState<U>(domain, values.template cast<U>().eval());
  }
};

template <typename T>
ChemState<T>::ChemState(Domain d, Matrix<T> v) : domain(std::move(d)), values(std::move(v)) {}

// x * sigmoid(5x), written so that neither branch overflows for finite x.
template <typename T>
inline T swish5(T x) {
  const T z = T(5) * x;
  const T s = z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
  return x * s;
}

template <typename T>
inline T swish5_derivative(T x) {
  const T z = T(5) * x;
  const T s = z >= T(0) ? T(1) / (T(1) + std::exp(-z)) : std::exp(z) / (T(1) + std::exp(z));
  return s + T(5) * x * s * (T(1) - s);
}

// Elementwise in place; used on hidden pre-activations.
template <typename T>
void swish5_inplace(Matrix<T>& m);

// act = swish5(z) and slope = swish5'(z), sharing one sigmoid evaluation.
template <typename T>
void swish5_with_derivative(const Matrix<T>& z, Matrix<T>& act, Matrix<T>& slope);

template <typename T>
struct ReactionParams {
  Matrix<T> w0;  // n x h
  Vector<T> b0;  // h
  Matrix<T> w1;  // h x n

  int channels() const { return static_cast<int>(w0.rows()); }
  int hidden() const { return static_cast<int>(w0.cols()); }
  std::size_t parameter_count() const { return std::size_t(w0.size() + b0.size() + w1.size()); }

  static ReactionParams zeros(int channels, int hidden);
  void validate() const;
};

enum class DiffusionMode : std::uint32_t { fixed = 0, learned = 1 };

template <typename T>
struct DiffusionSpec {
  DiffusionMode mode = DiffusionMode::fixed;
  // Coefficients c in fixed mode, logits in learned mode.
  Vector<T> values;

  static DiffusionSpec fixed(Vector<T> c);
  static DiffusionSpec learned(Vector<T> logits);
  // Four equal groups of decreasing "slowness": 1/8, 1/4, 1/2, 1. Channel i
  // belongs to group floor(4 i / n).
  static DiffusionSpec grouped(int channels);

  // Effective c_i; sigmoid of the logits in learned mode.
  Vector<T> coefficients() const;
  void validate(int channels) const;
};

template <typename T>
struct RDModel {
  ReactionParams<T> reaction;
  DiffusionSpec<T> diffusion;

  int channels() const { return reaction.channels(); }
  int hidden() const { return reaction.hidden(); }
  // Reaction network parameters only (n h + h + h n).
  std::size_t parameter_count() const { return reaction.parameter_count(); }
  std::size_t trainable_count() const {
    return parameter_count() + (diffusion.mode == DiffusionMode::learned ? std::size_t(diffusion.values.size()) : 0);
  }
  void validate() const;

  template <typename U>
  RDModel<U> cast() const {
    RDModel<U> m;
    m.reaction.w0 = reaction.w0.template cast<U>();
    m.reaction.b0 = reaction.b0.template cast<U>();
    m.reaction.w1 = reaction.w1.template cast<U>();
    m.diffusion.mode = diffusion.mode;
    m.diffusion.values = diffusion.values.template cast<U>();
    return m;
  }
};

struct ModelInit {
  int channels = 32;
  int hidden = 128;
  DiffusionMode diffusion = DiffusionMode::fixed;
  // Scale of W1; zero makes the untrained model a pure diffusion.
  double w1_scale = 0.0;
  std::uint64_t seed = 0;
};

// Glorot-uniform W0, zero b0, W1 uniform in [-w1_scale, w1_scale] (default 0).
// Learned-mode logits start at logit of the grouped coefficients.
template <typename T>
RDModel<T> make_model(const ModelInit& init);

// act(x W0 + b0) W1 applied to each row of x.
template <typename T>
Matrix<T> reaction_forward(const Matrix<T>& x, const ReactionParams<T>& p);

// x W0 + b0 (the retained hidden pre-activations).
template <typename T>
Matrix<T> reaction_preactivation(const Matrix<T>& x, const ReactionParams<T>& p);

// Channels 0..2 as a 3 x cells matrix, unmodified.
template <typename T>
Matrix<T> to_rgb(const ChemState<T>& x);
// Same, clamped to [0, 1] for display.
template <typename T>
Matrix<T> to_display_rgb(const ChemState<T>& x);

}  // namespace nrd
