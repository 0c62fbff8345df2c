#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <memory>
#include <span>
#include <vector>

#include "nrd/grad.hpp"
#include "nrd/rng.hpp"
#include "nrd/seed.hpp"
#include "nrd/texture.hpp"

namespace nrd {

struct TrainConfig {
  int n_train = 20000;
  int i_min = 32;
  int i_max = 96;
  int n_pool = 1024;
  int r_seed = 32;
  int n_batch = 4;
  double lr = 1e-3;
  double lr_decay = 0.2;
  std::vector<int> lr_milestones{1000, 10000};
  int grid = 128;
  std::uint64_t rng_seed = 0;
  SeedSpec seed;  // rng_seed is replaced per draw
  int max_consecutive_divergences = 10;

  void validate() const;
};

// Base rate times decay^(number of milestones <= step).
double lr_at(int step, const TrainConfig& cfg);

// Unroll length, integer-uniform on [I_min, I_max].
int draw_unroll(Rng& rng, const TrainConfig& cfg);

// Each tensor scaled to unit L2 norm: g / (||g|| + 1e-8).
template <typename T>
Gradients<T> normalize_gradients(Gradients<T> g);

template <typename T>
class Adam {
 public:
  explicit Adam(std::vector<Index> sizes, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  // params[i] -= lr * mhat / (sqrt(vhat) + eps) with bias-corrected moments.
  void step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads, double lr);

  std::uint64_t steps() const { return t_; }
  double beta1() const { return beta1_; }
  double beta2() const { return beta2_; }
  double eps() const { return eps_; }
  const std::vector<Vector<T>>& first_moments() const { return m_; }
  const std::vector<Vector<T>>& second_moments() const { return v_; }
  void set_state(std::uint64_t t, std::vector<Vector<T>> m, std::vector<Vector<T>> v);

 private:
  double beta1_, beta2_, eps_;
  std::uint64_t t_ = 0;
  std::vector<Vector<T>> m_, v_;
};

// Views of the trainable tensors in a fixed order: W0, b0, W1[, c_logits].
std::vector<std::span<float>> parameter_views(RDModel<float>& m);
std::vector<std::span<const float>> gradient_views(const Gradients<float>& g);

struct SamplePool {
  std::vector<ChemState<float>> states;

  std::size_t size() const { return states.size(); }
  // FNV-1a over every value's bit pattern.
  std::uint64_t digest() const;
};

struct StepReport {
  int step = 0;
  double loss = 0.0;
  double lr = 0.0;
  int unroll = 0;
  bool seed_injected = false;
  bool diverged = false;
  std::vector<int> batch;
};

// Pool-based training loop: sample a batch, unroll, match textures, update.
class Trainer {
 public:
  Trainer(RDModel<float> model, std::shared_ptr<const TextureTargetBank<float>> bank, TrainConfig cfg);

  // Runs the next step (step index = steps_done() + 1).
  StepReport step();
  int steps_done() const { return step_; }

  const RDModel<float>& model() const { return model_; }
  const SamplePool& pool() const { return pool_; }
  void set_pool(SamplePool pool);
  const Adam<float>& optimizer() const { return adam_; }
  const TrainConfig& config() const { return cfg_; }
  ChemState<float> fresh_seed();

  // Model, optimizer moments, step counter, rng stream states and the pool
  // digest. The pool itself is not stored; restore() requires the trainer's
  // current pool to match the recorded digest.
  std::vector<std::uint8_t> encode_checkpoint() const;
  void checkpoint(const std::filesystem::path& path) const;
  void restore(const std::filesystem::path& path);
  void restore_bytes(std::vector<std::uint8_t> bytes, const std::string& what);

 private:
  Grid2D grid() const { return {cfg_.grid, cfg_.grid}; }
  std::vector<int> sample_batch();

  RDModel<float> model_;
  std::shared_ptr<const TextureTargetBank<float>> bank_;
  TrainConfig cfg_;
  Adam<float> adam_;
  SamplePool pool_;
  Rng batch_rng_, seed_rng_, unroll_rng_;
  int step_ = 0;
  int consecutive_divergences_ = 0;
};

// One CSV row per step: step,loss,lr,unroll,seed_injected.
void write_log_header(std::ostream& os);
void write_log_row(std::ostream& os, const StepReport& r);

inline constexpr std::uint32_t kCheckpointVersion = 1;

}  // namespace nrd
