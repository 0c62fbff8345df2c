#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <cstring>
#include <memory>

#include "nrd/nrd.hpp"

namespace py = pybind11;
using namespace nrd;

namespace {

using FloatArray = py::array_t<float, py::array::c_style | py::array::forcecast>;

// Grid states cross the boundary as (H, W, C) arrays, volumes as (D, H, W, C).
ChemState<float> state_from_array(const FloatArray& a) {
  Domain d;
  if (a.ndim() == 3) {
    d = Grid2D{int(a.shape(0)), int(a.shape(1))};
  } else if (a.ndim() == 4) {
    d = Volume{int(a.shape(0)), int(a.shape(1)), int(a.shape(2))};
  } else {
    throw ContractError("state must be (H, W, C) or (D, H, W, C)");
  }
  const Index channels = a.shape(a.ndim() - 1);
  Matrix<float> v(cell_count(d), channels);
  std::memcpy(v.data(), a.data(), sizeof(float) * std::size_t(v.size()));
  return ChemState<float>(d, std::move(v));
}

FloatArray state_to_array(const ChemState<float>& x) {
  std::vector<py::ssize_t> shape;
  if (const auto* g = std::get_if<Grid2D>(&x.domain)) {
    shape = {g->height, g->width, x.channels()};
  } else if (const auto* v = std::get_if<Volume>(&x.domain)) {
    shape = {v->depth, v->height, v->width, x.channels()};
  } else {
    shape = {x.cells(), x.channels()};
  }
  FloatArray out(shape);
  std::memcpy(out.mutable_data(), x.values.data(), sizeof(float) * std::size_t(x.values.size()));
  return out;
}

FloatArray matrix_to_array(const Matrix<float>& m) {
  FloatArray out({m.rows(), m.cols()});
  std::memcpy(out.mutable_data(), m.data(), sizeof(float) * std::size_t(m.size()));
  return out;
}

Matrix<float> array_to_matrix(const FloatArray& a, Index rows, Index cols, const char* what) {
  if (a.ndim() != 2 || a.shape(0) != rows || a.shape(1) != cols)
    throw ContractError(std::string(what) + " must have shape (" + std::to_string(rows) + ", " +
                        std::to_string(cols) + ")");
  Matrix<float> m(rows, cols);
  std::memcpy(m.data(), a.data(), sizeof(float) * std::size_t(m.size()));
  return m;
}

// (H, W, 3) float image in [0, 1].
Image image_from_array(const FloatArray& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw ContractError("image must be (H, W, 3)");
  const int h = int(a.shape(0)), w = int(a.shape(1));
  Image img(3, h, w);
  auto r = a.unchecked<3>();
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      for (int c = 0; c < 3; ++c) img.at(c, y, x) = r(y, x, c);
  return img;
}

FloatArray image_to_array(const Image& img) {
  FloatArray out({img.height, img.width, img.channels()});
  auto w = out.mutable_unchecked<3>();
  for (int y = 0; y < img.height; ++y)
    for (int x = 0; x < img.width; ++x)
      for (int c = 0; c < img.channels(); ++c) w(y, x, c) = img.at(c, y, x);
  return out;
}

StepCoeffs<float> coeffs(float r, float d) {
  StepCoeffs<float> k;
  k.r = r;
  k.d = d;
  return k;
}

std::shared_ptr<const TextureTargetBank<float>> make_bank(const Image& target, int n_rot) {
  auto fx = std::make_shared<const FeatureExtractor<float>>(builtin_filter_bank());
  BankOptions bo;
  bo.n_rot = n_rot;
  return std::make_shared<const TextureTargetBank<float>>(build_target_bank<float>(target, fx, bo));
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Differentiable neural reaction-diffusion engine";

  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
  py::register_exception<ContractError>(m, "ContractError", PyExc_ValueError);
  py::register_exception<IoError>(m, "IoError", PyExc_OSError);
  py::register_exception<FormatError>(m, "FormatError", PyExc_ValueError);
  py::register_exception<IntegrityError>(m, "IntegrityError", PyExc_ValueError);
  py::register_exception<DivergenceError>(m, "DivergenceError", PyExc_ArithmeticError);
  py::register_exception<TrainingAborted>(m, "TrainingAborted", PyExc_RuntimeError);

  py::class_<RDModel<float>>(m, "Model")
      .def_property_readonly("channels", &RDModel<float>::channels)
      .def_property_readonly("hidden", &RDModel<float>::hidden)
      .def_property_readonly("parameter_count", &RDModel<float>::parameter_count)
      .def_property_readonly("trainable_count", &RDModel<float>::trainable_count)
      .def_property_readonly("learned_diffusion",
                             [](const RDModel<float>& md) { return md.diffusion.mode == DiffusionMode::learned; })
      .def_property(
          "w0", [](const RDModel<float>& md) { return matrix_to_array(md.reaction.w0); },
          [](RDModel<float>& md, const FloatArray& a) {
            md.reaction.w0 = array_to_matrix(a, md.channels(), md.hidden(), "w0");
          })
      .def_property(
          "w1", [](const RDModel<float>& md) { return matrix_to_array(md.reaction.w1); },
          [](RDModel<float>& md, const FloatArray& a) {
            md.reaction.w1 = array_to_matrix(a, md.hidden(), md.channels(), "w1");
          })
      .def_property(
          "b0",
          [](const RDModel<float>& md) {
            FloatArray out(md.hidden());
            std::memcpy(out.mutable_data(), md.reaction.b0.data(), sizeof(float) * md.hidden());
            return out;
          },
          [](RDModel<float>& md, const FloatArray& a) {
            if (a.ndim() != 1 || a.shape(0) != md.hidden()) throw ContractError("b0 must have shape (hidden,)");
            std::memcpy(md.reaction.b0.data(), a.data(), sizeof(float) * md.hidden());
          })
      .def_property_readonly("diffusion_coefficients",
                             [](const RDModel<float>& md) {
                               const Vector<float> c = md.diffusion.coefficients();
                               FloatArray out(c.size());
                               std::memcpy(out.mutable_data(), c.data(), sizeof(float) * c.size());
                               return out;
                             })
      .def("checksum", [](const RDModel<float>& md) { return model_checksum(md); });

  m.def(
      "make_model",
      [](int channels, int hidden, bool learned_diffusion, double w1_scale, std::uint64_t seed) {
        return make_model<float>({.channels = channels,
                                  .hidden = hidden,
                                  .diffusion = learned_diffusion ? DiffusionMode::learned : DiffusionMode::fixed,
                                  .w1_scale = w1_scale,
                                  .seed = seed});
      },
      py::arg("channels") = 32, py::arg("hidden") = 128, py::arg("learned_diffusion") = false,
      py::arg("w1_scale") = 0.0, py::arg("seed") = 0);
  m.def("load_model", [](const std::filesystem::path& p) { return load_model(p).model; }, py::arg("path"));
  m.def("save_model", [](const std::filesystem::path& p, const RDModel<float>& md) { save_model(p, md); },
        py::arg("path"), py::arg("model"));

  m.def(
      "make_seed",
      [](int height, int width, int channels, std::uint64_t rng_seed) {
        SeedSpec s;
        s.rng_seed = rng_seed;
        return state_to_array(make_seed<float>(s, Grid2D{height, width}, channels));
      },
      py::arg("height"), py::arg("width"), py::arg("channels"), py::arg("rng_seed") = 0);

  m.def(
      "euler_step",
      [](const RDModel<float>& md, const FloatArray& state, float r, float d) {
        return state_to_array(euler_step(state_from_array(state), md, coeffs(r, d)));
      },
      py::arg("model"), py::arg("state"), py::arg("r") = 1.0f, py::arg("d") = 1.0f);

  m.def(
      "simulate",
      [](const RDModel<float>& md, const FloatArray& state, int steps, float r, float d) {
        auto x = state_from_array(state);
        py::gil_scoped_release release;
        auto y = simulate(std::move(x), md, coeffs(r, d), steps);
        py::gil_scoped_acquire acquire;
        return state_to_array(y);
      },
      py::arg("model"), py::arg("state"), py::arg("steps"), py::arg("r") = 1.0f, py::arg("d") = 1.0f);

  m.def(
      "to_rgb",
      [](const FloatArray& state) {
        const auto x = state_from_array(state);
        const auto* g = std::get_if<Grid2D>(&x.domain);
        if (!g) throw ContractError("to_rgb expects an (H, W, C) grid state");
        return image_to_array(rgb_image(to_display_rgb(x), g->height, g->width));
      },
      py::arg("state"));

  m.def(
      "autocorrelation_length",
      [](const FloatArray& state, int channel) { return autocorrelation_length(state_from_array(state), channel); },
      py::arg("state"), py::arg("channel") = 1);

  m.def(
      "load_target", [](const std::string& spec, int size) { return image_to_array(load_target(spec, size)); },
      py::arg("spec"), py::arg("size"));

  m.def(
      "texture_distance",
      [](const FloatArray& image, const FloatArray& target, int n_rot) {
        auto bank = make_bank(image_from_array(target), n_rot);
        const Image img = image_from_array(image);
        return texture_loss<float>(std::span<const FeatureMap<float>>(&img, 1), *bank, false).loss;
      },
      py::arg("image"), py::arg("target"), py::arg("n_rot") = 16,
      "Rotation-invariant Gram distance between an (H, W, 3) image and a target image.");

  m.def(
      "gradcheck",
      [](int size, int steps, std::uint64_t seed) {
        auto md = make_model<double>({.channels = 4, .hidden = 8, .w1_scale = 0.3, .seed = seed});
        Rng rng(seed + 1);
        std::uniform_real_distribution<double> u(-0.5, 0.5);
        for (Index i = 0; i < md.reaction.b0.size(); ++i) md.reaction.b0[i] = 0.2 * u(rng);
        ChemState<double> x0(Grid2D{size, size}, 4);
        for (Index i = 0; i < x0.values.size(); ++i) x0.values.data()[i] = u(rng);
        const auto rep = gradcheck(md, x0, {}, steps, squared_norm_loss<double>);
        return py::make_tuple(rep.passed(), rep.max_rel_error());
      },
      py::arg("size") = 6, py::arg("steps") = 3, py::arg("seed") = 0,
      "Finite-difference check of backpropagation on a small grid; returns (passed, max_rel_error).");

  py::class_<StepReport>(m, "StepReport")
      .def_readonly("step", &StepReport::step)
      .def_readonly("loss", &StepReport::loss)
      .def_readonly("lr", &StepReport::lr)
      .def_readonly("unroll", &StepReport::unroll)
      .def_readonly("seed_injected", &StepReport::seed_injected)
      .def_readonly("diverged", &StepReport::diverged)
      .def_readonly("batch", &StepReport::batch);

  py::class_<Trainer>(m, "Trainer")
      .def(py::init([](const RDModel<float>& md, const FloatArray& target, int grid, int n_rot, int pool, int batch,
                       std::uint64_t rng_seed) {
             TrainConfig cfg;
             cfg.grid = grid;
             cfg.n_pool = pool;
             cfg.n_batch = batch;
             cfg.rng_seed = rng_seed;
             return std::make_unique<Trainer>(md, make_bank(image_from_array(target), n_rot), cfg);
           }),
           py::arg("model"), py::arg("target"), py::arg("grid") = 128, py::arg("n_rot") = 16,
           py::arg("pool") = 1024, py::arg("batch") = 4, py::arg("rng_seed") = 0)
      .def(
          "step",
          [](Trainer& t) {
            py::gil_scoped_release release;
            return t.step();
          })
      .def_property_readonly("steps_done", &Trainer::steps_done)
      .def_property_readonly("model", [](const Trainer& t) { return t.model(); })
      .def("checkpoint", &Trainer::checkpoint, py::arg("path"))
      .def("restore", &Trainer::restore, py::arg("path"));

  m.def("lr_at", [](int step) { return lr_at(step, TrainConfig{}); }, py::arg("step"));
}
