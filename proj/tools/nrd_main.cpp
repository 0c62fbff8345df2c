#include <CLI11.hpp>

#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>

#include <omp.h>

#include "nrd/nrd.hpp"

using namespace nrd;
namespace fs = std::filesystem;

namespace {

enum Exit : int { kOk = 0, kFailure = 1, kConfig = 2, kIo = 3, kDivergence = 4 };

struct Common {
  std::uint64_t rng_seed = 0;
  int threads = 0;
};

struct TrainArgs {
  std::string target;
  int steps = 20000;
  int size = 128;
  std::string extractor = "filterbank";
  int nrot = 16;
  std::string model = "model.rdmd";
  int channels = 32;
  int hidden = 128;
  int pool = 1024;
  int batch = 4;
  bool learn_diffusion = false;
  std::string log;
  std::string checkpoint;
  int checkpoint_every = 1000;
};

struct RunArgs {
  std::string model;
  int steps = 5000;
  int size = 128;
  std::string frames_dir = "frames";
  int stride = 0;
  float r = 1.0f;
  float d = 1.0f;
  std::string rfield;
};

struct ZoomArgs {
  std::string model;
  int steps = 2000;
  int size = 128;
  float r = 0.25f;
  std::string frames_dir;
};

struct MeshArgs {
  std::string model;
  std::string mesh;
  int steps = 5000;
  int stride = 0;
  std::string frames_dir;
  std::string out = "mesh.ply";
};

struct VolumeArgs {
  std::string model;
  std::string volume = "64x64x64";
  int steps = 2000;
  std::string frames_dir = "slices";
  std::string out;
};

struct GradcheckArgs {
  int size = 6;
  int steps = 3;
  int channels = 4;
  int hidden = 8;
};

void apply_threads(int threads) {
  if (threads <= 0) {
    if (const char* env = std::getenv("RD_THREADS")) {
      try {
        threads = std::stoi(env);
      } catch (const std::exception&) {
        throw ConfigError(std::string("RD_THREADS is not an integer: '") + env + "'");
      }
      if (threads <= 0) throw ConfigError("RD_THREADS must be positive");
    }
  }
  if (threads > 0) omp_set_num_threads(threads);
}

SeedSpec seed_for(std::uint64_t rng_seed) {
  SeedSpec s;
  s.rng_seed = substream(rng_seed, Stream::simulation)();
  return s;
}

std::shared_ptr<const FeatureExtractor<float>> make_extractor(const std::string& spec) {
  if (spec == "filterbank") return std::make_shared<const FeatureExtractor<float>>(builtin_filter_bank());
  if (spec.rfind("cnn:", 0) == 0) return std::make_shared<const FeatureExtractor<float>>(load_portable_cnn(spec.substr(4)));
  throw ConfigError("unknown extractor '" + spec + "' (expected filterbank or cnn:PATH)");
}

Image target_image(const std::string& spec, int size) {
  // Rotated crops need a source whose inscribed square covers the grid.
  const int hint = static_cast<int>(std::ceil(size * std::sqrt(2.0))) + 2;
  if (spec == "stripes" || spec == "dots") return load_target("procedural:" + spec, hint);
  return load_target(spec, hint);
}

std::string numbered(const char* stem, int index, const char* ext) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%06d.%s", stem, index, ext);
  return buf;
}

int cmd_train(const TrainArgs& a, const Common& c) {
  if (a.steps < 1) throw ConfigError("--steps must be at least 1");
  if (a.size < 8) throw ConfigError("--size must be at least 8");
  if (a.nrot < 1) throw ConfigError("--nrot must be at least 1");
  auto fx = make_extractor(a.extractor);
  Image target = target_image(a.target, a.size);
  BankOptions bo;
  bo.n_rot = a.nrot;
  auto bank = std::make_shared<const TextureTargetBank<float>>(build_target_bank<float>(target, fx, bo));

  TrainConfig cfg;
  cfg.n_train = a.steps;
  cfg.grid = a.size;
  cfg.n_pool = a.pool;
  cfg.n_batch = a.batch;
  cfg.rng_seed = c.rng_seed;
  ModelInit init;
  init.channels = a.channels;
  init.hidden = a.hidden;
  init.seed = substream(c.rng_seed, Stream::model_init)();
  init.diffusion = a.learn_diffusion ? DiffusionMode::learned : DiffusionMode::fixed;
  Trainer trainer(make_model<float>(init), bank, cfg);

  const std::string log_path = a.log.empty() ? a.model + ".csv" : a.log;
  std::ofstream log(log_path);
  if (!log) throw IoError("cannot write log " + log_path);
  write_log_header(log);

  double window = 0.0;
  int counted = 0;
  for (int s = 1; s <= cfg.n_train; ++s) {
    const StepReport rep = trainer.step();
    write_log_row(log, rep);
    if (!rep.diverged) {
      window += rep.loss;
      ++counted;
    }
    if (s % 100 == 0 || s == cfg.n_train) {
      std::cerr << "step " << s << "  loss " << (counted ? window / counted : NAN) << "  lr " << rep.lr << "\n";
      window = 0.0;
      counted = 0;
      log.flush();
    }
    if (!a.checkpoint.empty() && a.checkpoint_every > 0 && s % a.checkpoint_every == 0) trainer.checkpoint(a.checkpoint);
  }
  save_model(a.model, trainer.model(), {image_hash(target), std::uint64_t(cfg.n_train)});
  std::cout << "wrote " << a.model << " (" << trainer.model().trainable_count() << " parameters)\n";
  return kOk;
}

int cmd_run(const RunArgs& a, const Common& c) {
  if (a.steps < 1) throw ConfigError("--steps must be at least 1");
  if (a.stride < 0) throw ConfigError("--stride must be non-negative");
  if (!(a.d > 0.0f)) throw ConfigError("--d must be positive");
  if (!(a.r > 0.0f)) throw ConfigError("--r must be positive");
  const ModelFile mf = load_model(a.model);
  const Grid2D grid{a.size, a.size};
  auto x0 = make_seed<float>(seed_for(c.rng_seed), grid, mf.model.channels());
  fs::create_directories(a.frames_dir);
  const fs::path dir = a.frames_dir;
  FrameCallback<float> save = [&](int step, const ChemState<float>& x) {
    write_png(dir / numbered("frame", step, "png"), rgb_image(to_display_rgb(x), a.size, a.size));
  };
  ChemState<float> out;
  if (!a.rfield.empty()) {
    out = run_nonuniform_r(mf.model, std::move(x0), parse_rfield(a.rfield, grid), a.steps, a.stride, save);
  } else {
    StepCoeffs<float> k;
    k.r = a.r;
    k.d = a.d;
    out = simulate(std::move(x0), mf.model, k, a.steps, a.stride, save);
  }
  write_png(dir / "final.png", rgb_image(to_display_rgb(out), a.size, a.size));
  std::cout << "wrote " << (dir / "final.png").string() << "\n";
  return kOk;
}

int cmd_zoom_test(const ZoomArgs& a, const Common& c) {
  if (a.steps < 1) throw ConfigError("--steps must be at least 1");
  if (!(a.r > 0.0f && a.r <= 1.0f)) throw ConfigError("--r must lie in (0, 1]");
  const ModelFile mf = load_model(a.model);
  const Grid2D grid{a.size, a.size};
  const auto seed = seed_for(c.rng_seed);
  auto base = run_nonuniform_r(mf.model, make_seed<float>(seed, grid, mf.model.channels()), uniform_rfield(grid, 1.0f),
                               a.steps);
  // A smaller r slows the dynamics by the same factor, so the run is longer.
  const int zoom_steps = static_cast<int>(std::lround(a.steps / a.r));
  auto zoomed = run_nonuniform_r(mf.model, make_seed<float>(seed, grid, mf.model.channels()),
                                 uniform_rfield(grid, a.r), zoom_steps);
  if (!a.frames_dir.empty()) {
    fs::create_directories(a.frames_dir);
    write_png(fs::path(a.frames_dir) / "r1.png", rgb_image(to_display_rgb(base), a.size, a.size));
    write_png(fs::path(a.frames_dir) / "zoomed.png", rgb_image(to_display_rgb(zoomed), a.size, a.size));
  }
  const auto l1 = autocorrelation_length(base), lz = autocorrelation_length(zoomed);
  if (!l1 || !lz) {
    std::cout << "autocorrelation length undefined (pattern has no zero crossing)\n";
    return kFailure;
  }
  std::cout << "autocorrelation length r=1: " << *l1 << "\n";
  std::cout << "autocorrelation length r=" << a.r << ": " << *lz << "\n";
  std::cout << "ratio " << *lz / *l1 << " (expected " << 1.0 / std::sqrt(a.r) << ")\n";
  return kOk;
}

MeshRef mesh_from_spec(const std::string& spec) {
  if (spec == "cube") return std::make_shared<const MeshGraph>(make_cube_mesh().graph());
  if (spec.rfind("torus:", 0) == 0) {
    int ring = 0, tube = 0;
    if (std::sscanf(spec.c_str() + 6, "%dx%d", &ring, &tube) != 2) throw ConfigError("expected torus:RINGxTUBE");
    return std::make_shared<const MeshGraph>(make_torus_mesh(ring, tube, 1.0, 0.35).graph());
  }
  return std::make_shared<const MeshGraph>(read_obj(spec));
}

int cmd_run_mesh(const MeshArgs& a, const Common& c) {
  if (a.steps < 1) throw ConfigError("--steps must be at least 1");
  const ModelFile mf = load_model(a.model);
  const auto mesh = mesh_from_spec(a.mesh);
  FrameCallback<float> save;
  if (a.stride > 0) {
    if (a.frames_dir.empty()) throw ConfigError("--stride needs --frames-dir");
    fs::create_directories(a.frames_dir);
    save = [&](int step, const ChemState<float>& x) {
      write_ply(fs::path(a.frames_dir) / numbered("mesh", step, "ply"), *mesh, x);
    };
  }
  auto out = run_mesh(mf.model, mesh, seed_for(c.rng_seed), a.steps, a.stride, save);
  write_ply(a.out, *mesh, out);
  std::cout << "wrote " << a.out << " (" << mesh->vertex_count() << " vertices, rgb variance " << rgb_variance(out)
            << ")\n";
  return kOk;
}

Volume parse_volume(const std::string& s) {
  int d = 0, h = 0, w = 0;
  char tail = 0;
  if (std::sscanf(s.c_str(), "%dx%dx%d%c", &d, &h, &w, &tail) != 3 || d < 1 || h < 1 || w < 1)
    throw ConfigError("--volume expects DxHxW with positive sizes, got '" + s + "'");
  return {d, h, w};
}

int cmd_run_volume(const VolumeArgs& a, const Common& c) {
  if (a.steps < 1) throw ConfigError("--steps must be at least 1");
  const Volume dims = parse_volume(a.volume);
  const ModelFile mf = load_model(a.model);
  auto out = run_volume(mf.model, dims, seed_for(c.rng_seed), a.steps);
  write_volume_slices(a.frames_dir, out);
  if (!a.out.empty()) write_voxels(a.out, out);
  std::cout << "wrote " << dims.depth << " slices to " << a.frames_dir << " (rgb variance " << rgb_variance(out)
            << ")\n";
  return kOk;
}

int cmd_gradcheck(const GradcheckArgs& a, const Common& c) {
  if (a.steps < 1) throw ConfigError("--steps must be at least 1");
  ModelInit init;
  init.channels = a.channels;
  init.hidden = a.hidden;
  init.w1_scale = 0.3;
  init.seed = substream(c.rng_seed, Stream::gradcheck)();
  auto model = make_model<double>(init);
  Rng rng = substream(c.rng_seed, Stream::gradcheck);
  std::uniform_real_distribution<double> u(-0.5, 0.5);
  for (Index i = 0; i < model.reaction.b0.size(); ++i) model.reaction.b0[i] = 0.2 * u(rng);
  ChemState<double> x0(Grid2D{a.size, a.size}, a.channels);
  for (Index i = 0; i < x0.values.size(); ++i) x0.values.data()[i] = u(rng);

  auto fx = std::make_shared<const FeatureExtractor<double>>(builtin_filter_bank().cast<double>());
  BankOptions bo;
  bo.n_rot = 4;
  bo.output_size = a.size;
  auto bank = std::make_shared<const TextureTargetBank<double>>(
      build_target_bank<double>(make_stripes(4 * a.size, 5.0, 20.0, c.rng_seed), fx, bo));
  const int side = a.size;
  StateLoss<double> texture = [bank, side](const ChemState<double>& x, Matrix<double>& grad) {
    auto img = rgb_image(to_rgb(x), side, side);
    auto tl = texture_loss<double>(std::span<const FeatureMap<double>>(&img, 1), *bank);
    grad = Matrix<double>::Zero(x.cells(), x.channels());
    grad.leftCols(3) = tl.gradients[0].data.transpose();
    return tl.loss;
  };

  bool ok = true;
  double worst = 0.0;
  for (auto [name, loss] : {std::pair<const char*, StateLoss<double>>{"quadratic", squared_norm_loss<double>},
                            std::pair<const char*, StateLoss<double>>{"texture", texture}}) {
    const auto rep = gradcheck(model, x0, {}, a.steps, loss);
    std::cerr << name << ": " << rep.summary() << "\n";
    ok = ok && rep.passed();
    worst = std::max(worst, rep.max_rel_error());
  }
  std::cout << (ok ? "PASS" : "FAIL") << ", max rel err " << worst << (ok ? " < " : " >= ") << 1e-4 << "\n";
  return ok ? kOk : kFailure;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Neural reaction-diffusion texture engine"};
  app.require_subcommand(1);
  Common common;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--rng-seed", common.rng_seed, "Global random seed");
    sub->add_option("--threads", common.threads, "Worker threads (default: RD_THREADS or all cores)");
  };

  TrainArgs ta;
  auto* train = app.add_subcommand("train", "Fit a model to a texture");
  train->add_option("--target", ta.target, "PNG path, or stripes / dots")->required();
  train->add_option("--steps", ta.steps, "Training steps")->capture_default_str();
  train->add_option("--size", ta.size, "Training grid side")->capture_default_str();
  train->add_option("--extractor", ta.extractor, "filterbank or cnn:PATH")->capture_default_str();
  train->add_option("--nrot", ta.nrot, "Target rotations")->capture_default_str();
  train->add_option("--model", ta.model, "Output model file")->capture_default_str();
  train->add_option("--channels", ta.channels, "State channels")->capture_default_str();
  train->add_option("--hidden", ta.hidden, "Reaction hidden width")->capture_default_str();
  train->add_option("--pool", ta.pool, "Sample pool size")->capture_default_str();
  train->add_option("--batch", ta.batch, "Batch size")->capture_default_str();
  train->add_flag("--learn-diffusion", ta.learn_diffusion, "Train per-channel diffusion coefficients");
  train->add_option("--log", ta.log, "CSV log (default: MODEL.csv)");
  train->add_option("--checkpoint", ta.checkpoint, "Checkpoint file");
  train->add_option("--checkpoint-every", ta.checkpoint_every, "Steps between checkpoints")->capture_default_str();
  add_common(train);

  RunArgs ra;
  auto* run = app.add_subcommand("run", "Simulate a trained model on a grid");
  run->add_option("--model", ra.model, "Model file")->required();
  run->add_option("--steps", ra.steps, "Euler steps")->capture_default_str();
  run->add_option("--size", ra.size, "Grid side")->capture_default_str();
  run->add_option("--frames-dir", ra.frames_dir, "Output directory")->capture_default_str();
  run->add_option("--stride", ra.stride, "Write a frame every N steps (0: final only)")->capture_default_str();
  run->add_option("--r", ra.r, "Reaction rate")->capture_default_str();
  run->add_option("--d", ra.d, "Diffusion rate")->capture_default_str();
  run->add_option("--rfield", ra.rfield, "uniform:V, radial or file:PATH (overrides --r)");
  add_common(run);

  ZoomArgs za;
  auto* zoom = app.add_subcommand("zoom-test", "Compare pattern scale at r=1 and a smaller r");
  zoom->add_option("--model", za.model, "Model file")->required();
  zoom->add_option("--steps", za.steps, "Steps at r=1 (the small-r run uses steps / r)")->capture_default_str();
  zoom->add_option("--size", za.size, "Grid side")->capture_default_str();
  zoom->add_option("--r", za.r, "Reduced reaction rate")->capture_default_str();
  zoom->add_option("--frames-dir", za.frames_dir, "Write both final frames here");
  add_common(zoom);

  MeshArgs ma;
  auto* mesh = app.add_subcommand("run-mesh", "Simulate on a triangle mesh");
  mesh->add_option("--model", ma.model, "Model file")->required();
  mesh->add_option("--mesh", ma.mesh, "OBJ path, cube, or torus:RINGxTUBE")->required();
  mesh->add_option("--steps", ma.steps, "Euler steps")->capture_default_str();
  mesh->add_option("--stride", ma.stride, "Write a PLY every N steps")->capture_default_str();
  mesh->add_option("--frames-dir", ma.frames_dir, "Directory for strided PLY frames");
  mesh->add_option("--out", ma.out, "Final PLY")->capture_default_str();
  add_common(mesh);

  VolumeArgs va;
  auto* vol = app.add_subcommand("run-volume", "Simulate on a 3D periodic volume");
  vol->add_option("--model", va.model, "Model file")->required();
  vol->add_option("--volume", va.volume, "DxHxW")->capture_default_str();
  vol->add_option("--steps", va.steps, "Euler steps")->capture_default_str();
  vol->add_option("--frames-dir", va.frames_dir, "Directory for PNG slices")->capture_default_str();
  vol->add_option("--out", va.out, "RDVX voxel dump");
  add_common(vol);

  GradcheckArgs ga;
  auto* gc = app.add_subcommand("gradcheck", "Check backpropagation against finite differences");
  gc->add_option("--size", ga.size, "Grid side")->capture_default_str();
  gc->add_option("--steps", ga.steps, "Unrolled steps")->capture_default_str();
  add_common(gc);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kConfig;
  }

  try {
    apply_threads(common.threads);
    if (*train) return cmd_train(ta, common);
    if (*run) return cmd_run(ra, common);
    if (*zoom) return cmd_zoom_test(za, common);
    if (*mesh) return cmd_run_mesh(ma, common);
    if (*vol) return cmd_run_volume(va, common);
    if (*gc) return cmd_gradcheck(ga, common);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const ContractError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const FormatError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const IntegrityError& e) {
    std::cerr << "i/o error: " << e.what() << "\n";
    return kIo;
  } catch (const DivergenceError& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const TrainingAborted& e) {
    std::cerr << "diverged: " << e.what() << "\n";
    return kDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kFailure;
  }
  return kFailure;
}
