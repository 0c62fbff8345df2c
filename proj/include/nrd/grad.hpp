#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "nrd/step.hpp"

namespace nrd {

// Gradients of a scalar loss with respect to everything the unrolled
// simulation depends on.
template <typename T>
struct Gradients {
  Matrix<T> w0;
  Vector<T> b0;
  Matrix<T> w1;
  Vector<T> c_logits;            // empty unless the model learns its diffusion
  std::optional<Matrix<T>> x0;   // only when requested

  static Gradients zeros_like(const RDModel<T>& m);
  bool all_finite() const;
  Gradients& operator+=(const Gradients& o);
  Gradients& operator*=(T s);
};

// Recorded forward trajectory. Holds a snapshot of the model and coefficients
// plus, per step, the input state and the hidden pre-activations.
template <typename T>
class Tape {
 public:
  Tape(ChemState<T> x0, RDModel<T> model, StepCoeffs<T> coeffs);

  // Runs `steps` more Euler steps. On divergence the tape keeps the steps that
  // succeeded and the DivergenceError carries the global step index.
  void advance(int steps);

  int size() const { return static_cast<int>(inputs_.size()); }
  const ChemState<T>& state() const { return state_; }
  const RDModel<T>& model() const { return model_; }
  const StepCoeffs<T>& coeffs() const { return coeffs_; }
  const Matrix<T>& input(int step) const { return inputs_[step]; }
  const Matrix<T>& preactivation(int step) const { return preacts_[step]; }
  std::size_t bytes() const;

 private:
  RDModel<T> model_;
  StepCoeffs<T> coeffs_;
  Vector<T> c_;
  ChemState<T> state_;
  std::vector<Matrix<T>> inputs_;
  std::vector<Matrix<T>> preacts_;
  detail::StepWorkspace<T> ws_;
};

template <typename T>
struct Recorded {
  ChemState<T> state;
  Tape<T> tape;
};

// T >= 1 Euler steps from x0 with everything retained for backward.
template <typename T>
Recorded<T> forward_record(const ChemState<T>& x0, const RDModel<T>& m, const StepCoeffs<T>& coeffs, int steps);

struct BackwardOptions {
  bool want_x0 = false;
};

// Reverse-mode pass from dL/dx_T back through every recorded step.
template <typename T>
Gradients<T> backward(const Tape<T>& tape, const Matrix<T>& dl_dxt, const BackwardOptions& opts = {});

// Scalar loss on a final state that also writes dL/dx into `grad`.
template <typename T>
using StateLoss = std::function<T(const ChemState<T>& x, Matrix<T>& grad)>;

template <typename T>
using BackwardFn = std::function<Gradients<T>(const Tape<T>&, const Matrix<T>&, const BackwardOptions&)>;

struct GradcheckEntry {
  std::string tensor;
  double max_rel_error = 0.0;
  double max_abs_error = 0.0;
  std::size_t checked = 0;
};

struct GradcheckReport {
  std::vector<GradcheckEntry> entries;
  double tolerance = 1e-4;
  double max_rel_error() const;
  bool passed() const { return max_rel_error() < tolerance; }
  std::string summary() const;
};

struct GradcheckOptions {
  double step = 1e-5;
  double tolerance = 1e-4;
  bool check_x0 = true;
  // Entries whose true gradient is below floor * (tensor max |g|) are compared
  // against that floor rather than themselves.
  double relative_floor = 1e-3;
};

// Central finite differences against backward() on every parameter (and the
// initial state). Reports, never throws on mismatch.
GradcheckReport gradcheck(const RDModel<double>& model, const ChemState<double>& x0, const StepCoeffs<double>& coeffs,
                          int steps, const StateLoss<double>& loss, const GradcheckOptions& opts = {},
                          const BackwardFn<double>& backward_fn = {});

// ||x||^2 and its gradient 2x.
template <typename T>
T squared_norm_loss(const ChemState<T>& x, Matrix<T>& grad);

}  // namespace nrd
