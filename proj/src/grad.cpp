#include "nrd/grad.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "nrd/errors.hpp"
#include "nrd/laplacian.hpp"

namespace nrd {

template <typename T>
Gradients<T> Gradients<T>::zeros_like(const RDModel<T>& m) {
  Gradients g;
  g.w0 = Matrix<T>::Zero(m.reaction.w0.rows(), m.reaction.w0.cols());
  g.b0 = Vector<T>::Zero(m.reaction.b0.size());
  g.w1 = Matrix<T>::Zero(m.reaction.w1.rows(), m.reaction.w1.cols());
  if (m.diffusion.mode == DiffusionMode::learned) g.c_logits = Vector<T>::Zero(m.channels());
  return g;
}

template <typename T>
bool Gradients<T>::all_finite() const {
  return w0.allFinite() && b0.allFinite() && w1.allFinite() && c_logits.allFinite() && (!x0 || x0->allFinite());
}

template <typename T>
Gradients<T>& Gradients<T>::operator+=(const Gradients& o) {
  w0 += o.w0;
  b0 += o.b0;
  w1 += o.w1;
  if (c_logits.size() == o.c_logits.size()) c_logits += o.c_logits;
  return *this;
}

template <typename T>
Gradients<T>& Gradients<T>::operator*=(T s) {
  w0 *= s;
  b0 *= s;
  w1 *= s;
  c_logits *= s;
  if (x0) *x0 *= s;
  return *this;
}

template <typename T>
Tape<T>::Tape(ChemState<T> x0, RDModel<T> model, StepCoeffs<T> coeffs)
    : model_(std::move(model)), coeffs_(std::move(coeffs)), state_(std::move(x0)) {
  model_.validate();
  if (state_.channels() != model_.channels()) throw ContractError("tape: state/model channel mismatch");
  coeffs_.validate(state_.cells());
  c_ = model_.diffusion.coefficients();
}

template <typename T>
void Tape<T>::advance(int steps) {
  Matrix<T> next;
  for (int s = 0; s < steps; ++s) {
    Matrix<T> preact;
    detail::euler_update(state_.domain, state_.values, model_, c_, coeffs_, next, ws_, &preact);
    if (!next.allFinite()) throw DivergenceError(size() + 1, detail::first_nonfinite_cell(next));
    inputs_.push_back(std::move(state_.values));
    preacts_.push_back(std::move(preact));
    state_.values = std::move(next);
    next = Matrix<T>();
  }
}

template <typename T>
std::size_t Tape<T>::bytes() const {
  std::size_t total = 0;
  for (const auto& m : inputs_) total += m.size() * sizeof(T);
  for (const auto& m : preacts_) total += m.size() * sizeof(T);
  return total;
}

template <typename T>
Recorded<T> forward_record(const ChemState<T>& x0, const RDModel<T>& m, const StepCoeffs<T>& coeffs, int steps) {
  if (steps < 1) throw ContractError("forward_record needs at least one step");
  Tape<T> tape(x0, m, coeffs);
  tape.advance(steps);
  ChemState<T> final_state = tape.state();
  return {std::move(final_state), std::move(tape)};
}

template <typename T>
Gradients<T> backward(const Tape<T>& tape, const Matrix<T>& dl_dxt, const BackwardOptions& opts) {
  const auto& model = tape.model();
  const auto& p = model.reaction;
  const auto& coeffs = tape.coeffs();
  const auto& domain = tape.state().domain;
  if (dl_dxt.rows() != tape.state().cells() || dl_dxt.cols() != tape.state().channels())
    throw ContractError("backward: adjoint shape does not match the recorded final state");

  Gradients<T> g = Gradients<T>::zeros_like(model);
  const bool learned = model.diffusion.mode == DiffusionMode::learned;
  const Vector<T> c = model.diffusion.coefficients();
  Vector<T> dc = Vector<T>::Zero(model.channels());
  const Index cells = dl_dxt.rows();

  Matrix<T> adj = dl_dxt;
  Matrix<T> gy, hidden, slope, dz, scaled, lap_scaled, lap_x;
  for (int t = tape.size() - 1; t >= 0; --t) {
    const Matrix<T>& x = tape.input(t);
    const Matrix<T>& z = tape.preactivation(t);

    // Reaction branch: r . act(x W0 + b0) W1.
    const bool unit_r = coeffs.r.is_uniform() && coeffs.r.uniform == T(1);
    if (!unit_r) {
      if (coeffs.r.is_uniform()) {
        gy = adj * coeffs.r.uniform;
      } else {
        gy = adj;
        for (Index i = 0; i < cells; ++i) gy.row(i) *= coeffs.r[i];
      }
    }
    const Matrix<T>& gr = unit_r ? adj : gy;
    swish5_with_derivative(z, hidden, slope);
    g.w1.noalias() += hidden.transpose() * gr;
    dz.noalias() = gr * p.w1.transpose();
    dz.array() *= slope.array();
    g.w0.noalias() += x.transpose() * dz;
    g.b0 += dz.colwise().sum().transpose();

    // Diffusion branch: d . c . lap(x); lap is self-adjoint.
    scaled = adj;
    if (coeffs.d.is_uniform()) {
      scaled.array().rowwise() *= (c * coeffs.d.uniform).transpose().array();
    } else {
      for (Index i = 0; i < cells; ++i) scaled.row(i) = scaled.row(i).cwiseProduct(c.transpose()) * coeffs.d[i];
    }
    if (learned) {
      laplacian(domain, x, lap_x);
      if (coeffs.d.is_uniform()) {
        dc += coeffs.d.uniform * adj.cwiseProduct(lap_x).colwise().sum().transpose();
      } else {
        for (Index i = 0; i < cells; ++i) dc += coeffs.d[i] * adj.row(i).cwiseProduct(lap_x.row(i)).transpose();
      }
    }
    laplacian(domain, scaled, lap_scaled);

    adj += lap_scaled;
    adj.noalias() += dz * p.w0.transpose();
  }

  if (learned) g.c_logits = dc.cwiseProduct(c.cwiseProduct((Vector<T>::Ones(c.size()) - c)));
  if (opts.want_x0) g.x0 = std::move(adj);
  return g;
}

template <typename T>
T squared_norm_loss(const ChemState<T>& x, Matrix<T>& grad) {
  grad = T(2) * x.values;
  return x.values.squaredNorm();
}

double GradcheckReport::max_rel_error() const {
  double m = 0.0;
  for (const auto& e : entries) m = std::max(m, e.max_rel_error);
  return m;
}

std::string GradcheckReport::summary() const {
  std::ostringstream os;
  os << (passed() ? "PASS" : "FAIL") << ", max rel err " << max_rel_error() << (passed() ? " < " : " >= ")
     << tolerance;
  for (const auto& e : entries)
    os << "\n  " << e.tensor << ": rel " << e.max_rel_error << ", abs " << e.max_abs_error << " over " << e.checked
       << " entries";
  return os.str();
}

namespace {

double simulate_loss(const ChemState<double>& x0, const RDModel<double>& m, const StepCoeffs<double>& coeffs,
                     int steps, const StateLoss<double>& loss) {
  ChemState<double> x = x0;
  for (int s = 0; s < steps; ++s) x = euler_step(x, m, coeffs, s + 1);
  Matrix<double> unused;
  return loss(x, unused);
}

template <typename Perturb>
GradcheckEntry check_tensor(const std::string& name, const double* analytic, Index count, Perturb&& perturbed_loss,
                            const GradcheckOptions& opts) {
  std::vector<double> numeric(count);
  for (Index i = 0; i < count; ++i)
    numeric[i] = (perturbed_loss(i, +opts.step) - perturbed_loss(i, -opts.step)) / (2.0 * opts.step);
  double scale = 0.0;
  for (Index i = 0; i < count; ++i) scale = std::max({scale, std::fabs(numeric[i]), std::fabs(analytic[i])});
  GradcheckEntry e{name, 0.0, 0.0, static_cast<std::size_t>(count)};
  const double floor = std::max(opts.relative_floor * scale, 1e-12);
  for (Index i = 0; i < count; ++i) {
    const double abs_err = std::fabs(analytic[i] - numeric[i]);
    const double denom = std::max({std::fabs(analytic[i]), std::fabs(numeric[i]), floor});
    e.max_abs_error = std::max(e.max_abs_error, abs_err);
    e.max_rel_error = std::max(e.max_rel_error, abs_err / denom);
  }
  return e;
}

}  // namespace

GradcheckReport gradcheck(const RDModel<double>& model, const ChemState<double>& x0, const StepCoeffs<double>& coeffs,
                          int steps, const StateLoss<double>& loss, const GradcheckOptions& opts,
                          const BackwardFn<double>& backward_fn) {
  GradcheckReport report;
  report.tolerance = opts.tolerance;

  auto rec = forward_record(x0, model, coeffs, steps);
  Matrix<double> adj;
  loss(rec.state, adj);
  if (adj.rows() != rec.state.cells() || adj.cols() != rec.state.channels())
    adj = Matrix<double>::Zero(rec.state.cells(), rec.state.channels());
  BackwardOptions bopts{opts.check_x0};
  Gradients<double> g = backward_fn ? backward_fn(rec.tape, adj, bopts) : backward(rec.tape, adj, bopts);

  auto param_entry = [&](const std::string& name, const double* analytic, Index count, auto&& select) {
    return check_tensor(
        name, analytic, count,
        [&](Index i, double delta) {
          RDModel<double> m = model;
          select(m)[i] += delta;
          return simulate_loss(x0, m, coeffs, steps, loss);
        },
        opts);
  };

  report.entries.push_back(
      param_entry("W0", g.w0.data(), g.w0.size(), [](RDModel<double>& m) { return m.reaction.w0.data(); }));
  report.entries.push_back(
      param_entry("b0", g.b0.data(), g.b0.size(), [](RDModel<double>& m) { return m.reaction.b0.data(); }));
  report.entries.push_back(
      param_entry("W1", g.w1.data(), g.w1.size(), [](RDModel<double>& m) { return m.reaction.w1.data(); }));
  if (model.diffusion.mode == DiffusionMode::learned)
    report.entries.push_back(param_entry("c_logits", g.c_logits.data(), g.c_logits.size(),
                                         [](RDModel<double>& m) { return m.diffusion.values.data(); }));
  if (opts.check_x0 && g.x0) {
    report.entries.push_back(check_tensor(
        "x0", g.x0->data(), g.x0->size(),
        [&](Index i, double delta) {
          ChemState<double> x = x0;
          x.values.data()[i] += delta;
          return simulate_loss(x, model, coeffs, steps, loss);
        },
        opts));
  }
  return report;
}

#define NRD_INSTANTIATE(T)                                                                                  \
  template struct Gradients<T>;                                                                             \
  template class Tape<T>;                                                                                   \
  template Recorded<T> forward_record<T>(const ChemState<T>&, const RDModel<T>&, const StepCoeffs<T>&, int); \
  template Gradients<T> backward<T>(const Tape<T>&, const Matrix<T>&, const BackwardOptions&);              \
  template T squared_norm_loss<T>(const ChemState<T>&, Matrix<T>&);

NRD_INSTANTIATE(float)
NRD_INSTANTIATE(double)

}  // namespace nrd
