#include "nrd/trainer.hpp"

#include <cmath>
#include <cstring>
#include <ostream>
#include <sstream>
#include <unordered_set>

#include "nrd/binary_io.hpp"
#include "nrd/errors.hpp"
#include "nrd/model_io.hpp"

namespace nrd {

void TrainConfig::validate() const {
  if (n_train < 1) throw ConfigError("N_train must be at least 1");
  if (i_min < 1 || i_max < i_min) throw ConfigError("unroll range needs 1 <= I_min <= I_max");
  if (r_seed < 1) throw ConfigError("R_seed must be at least 1");
  if (n_batch < 1 || n_batch > n_pool) throw ConfigError("N_batch must be in [1, N_pool]");
  if (grid < 4) throw ConfigError("training grid must be at least 4x4");
  if (!(lr > 0.0)) throw ConfigError("learning rate must be positive");
  seed.validate();
}

double lr_at(int step, const TrainConfig& cfg) {
  double lr = cfg.lr;
  for (int m : cfg.lr_milestones)
    if (step >= m) lr *= cfg.lr_decay;
  return lr;
}

int draw_unroll(Rng& rng, const TrainConfig& cfg) {
  return std::uniform_int_distribution<int>(cfg.i_min, cfg.i_max)(rng);
}

template <typename T>
Gradients<T> normalize_gradients(Gradients<T> g) {
  auto unit = [](auto& t) { t /= (t.norm() + T(1e-8)); };
  unit(g.w0);
  unit(g.b0);
  unit(g.w1);
  if (g.c_logits.size() > 0) unit(g.c_logits);
  return g;
}

template <typename T>
Adam<T>::Adam(std::vector<Index> sizes, double beta1, double beta2, double eps)
    : beta1_(beta1), beta2_(beta2), eps_(eps) {
  for (Index n : sizes) {
    m_.push_back(Vector<T>::Zero(n));
    v_.push_back(Vector<T>::Zero(n));
  }
}

template <typename T>
void Adam<T>::step(std::span<const std::span<T>> params, std::span<const std::span<const T>> grads, double lr) {
  if (params.size() != m_.size() || grads.size() != m_.size()) throw ContractError("Adam: tensor count mismatch");
  ++t_;
  const T b1 = T(beta1_), b2 = T(beta2_);
  const T c1 = T(1) - T(std::pow(beta1_, double(t_)));
  const T c2 = T(1) - T(std::pow(beta2_, double(t_)));
  for (std::size_t i = 0; i < m_.size(); ++i) {
    if (Index(params[i].size()) != m_[i].size() || Index(grads[i].size()) != m_[i].size())
      throw ContractError("Adam: tensor size mismatch");
    Eigen::Map<Vector<T>> p(params[i].data(), m_[i].size());
    Eigen::Map<const Vector<T>> g(grads[i].data(), m_[i].size());
    m_[i] = b1 * m_[i] + (T(1) - b1) * g;
    v_[i] = b2 * v_[i] + (T(1) - b2) * g.cwiseAbs2();
    p.array() -= T(lr) * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + T(eps_));
  }
}

template <typename T>
void Adam<T>::set_state(std::uint64_t t, std::vector<Vector<T>> m, std::vector<Vector<T>> v) {
  if (m.size() != m_.size() || v.size() != v_.size()) throw ContractError("Adam: restored tensor count mismatch");
  for (std::size_t i = 0; i < m_.size(); ++i)
    if (m[i].size() != m_[i].size() || v[i].size() != v_[i].size())
      throw ContractError("Adam: restored moment shape mismatch");
  t_ = t;
  m_ = std::move(m);
  v_ = std::move(v);
}

std::vector<std::span<float>> parameter_views(RDModel<float>& m) {
  auto& p = m.reaction;
  std::vector<std::span<float>> v{{p.w0.data(), std::size_t(p.w0.size())},
                                  {p.b0.data(), std::size_t(p.b0.size())},
                                  {p.w1.data(), std::size_t(p.w1.size())}};
  if (m.diffusion.mode == DiffusionMode::learned)
    v.emplace_back(m.diffusion.values.data(), std::size_t(m.diffusion.values.size()));
  return v;
}

std::vector<std::span<const float>> gradient_views(const Gradients<float>& g) {
  std::vector<std::span<const float>> v{{g.w0.data(), std::size_t(g.w0.size())},
                                        {g.b0.data(), std::size_t(g.b0.size())},
                                        {g.w1.data(), std::size_t(g.w1.size())}};
  if (g.c_logits.size() > 0) v.emplace_back(g.c_logits.data(), std::size_t(g.c_logits.size()));
  return v;
}

std::uint64_t SamplePool::digest() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
      h ^= (v >> (8 * i)) & 0xff;
      h *= 1099511628211ULL;
    }
  };
  mix32(static_cast<std::uint32_t>(states.size()));
  for (const auto& s : states) {
    const float* d = s.values.data();
    for (Index i = 0; i < s.values.size(); ++i) {
      std::uint32_t bits;
      std::memcpy(&bits, d + i, 4);
      mix32(bits);
    }
  }
  return h;
}

namespace {

std::vector<Index> tensor_sizes(const RDModel<float>& m) {
  std::vector<Index> sizes{m.reaction.w0.size(), m.reaction.b0.size(), m.reaction.w1.size()};
  if (m.diffusion.mode == DiffusionMode::learned) sizes.push_back(m.diffusion.values.size());
  return sizes;
}

std::string rng_state(const Rng& rng) {
  std::ostringstream os;
  os << rng;
  return os.str();
}

void set_rng_state(Rng& rng, const std::string& s) {
  std::istringstream is(s);
  is >> rng;
  if (!is) throw FormatError("checkpoint: unreadable rng state");
}

}  // namespace

Trainer::Trainer(RDModel<float> model, std::shared_ptr<const TextureTargetBank<float>> bank, TrainConfig cfg)
    : model_(std::move(model)),
      bank_(std::move(bank)),
      cfg_(std::move(cfg)),
      adam_(tensor_sizes(model_)),
      batch_rng_(substream(cfg_.rng_seed, Stream::batch)),
      seed_rng_(substream(cfg_.rng_seed, Stream::seeds)),
      unroll_rng_(substream(cfg_.rng_seed, Stream::unroll)) {
  cfg_.validate();
  model_.validate();
  if (!bank_ || bank_->size() < 1) throw ConfigError("trainer needs a non-empty target bank");

  Rng pool_rng = substream(cfg_.rng_seed, Stream::pool_init);
  pool_.states.reserve(cfg_.n_pool);
  for (int i = 0; i < cfg_.n_pool; ++i) {
    SeedSpec s = cfg_.seed;
    s.rng_seed = pool_rng();
    pool_.states.push_back(make_seed<float>(s, grid(), model_.channels()));
  }
}

void Trainer::set_pool(SamplePool pool) {
  if (pool.size() != static_cast<std::size_t>(cfg_.n_pool)) throw ContractError("pool size does not match N_pool");
  pool_ = std::move(pool);
}

ChemState<float> Trainer::fresh_seed() {
  SeedSpec s = cfg_.seed;
  s.rng_seed = seed_rng_();
  return make_seed<float>(s, grid(), model_.channels());
}

std::vector<int> Trainer::sample_batch() {
  std::uniform_int_distribution<int> pick(0, cfg_.n_pool - 1);
  std::vector<int> batch;
  std::unordered_set<int> used;
  while (static_cast<int>(batch.size()) < cfg_.n_batch) {
    int i = pick(batch_rng_);
    if (used.insert(i).second) batch.push_back(i);
  }
  return batch;
}

StepReport Trainer::step() {
  StepReport rep;
  rep.step = ++step_;
  rep.lr = lr_at(rep.step, cfg_);
  rep.batch = sample_batch();
  std::vector<ChemState<float>> x;
  for (int i : rep.batch) x.push_back(pool_.states[i]);
  if (rep.step % cfg_.r_seed == 0) {
    x[0] = fresh_seed();
    rep.seed_injected = true;
  }
  rep.unroll = draw_unroll(unroll_rng_, cfg_);

  const auto g = grid();
  const StepCoeffs<float> coeffs{};  // r = d = 1
  Gradients<float> total = Gradients<float>::zeros_like(model_);
  const float inv_batch = 1.0f / static_cast<float>(x.size());
  try {
    for (auto& sample : x) {
      Tape<float> tape(sample, model_, coeffs);
      tape.advance(rep.unroll);
      FeatureMap<float> img = rgb_image(to_rgb(tape.state()), g.height, g.width);
      auto tl = texture_loss<float>(std::span<const FeatureMap<float>>(&img, 1), *bank_);
      rep.loss += tl.loss * inv_batch;
      Matrix<float> adj = Matrix<float>::Zero(tape.state().cells(), model_.channels());
      adj.leftCols(3) = tl.gradients[0].data.transpose() * inv_batch;
      total += backward(tape, adj);
      sample = tape.state();
    }
    if (!total.all_finite() || !std::isfinite(rep.loss)) throw DivergenceError(rep.step, -1, "non-finite gradient");
  } catch (const DivergenceError& e) {
    rep.diverged = true;
    rep.loss = std::numeric_limits<double>::quiet_NaN();
    for (int i : rep.batch) pool_.states[i] = fresh_seed();
    if (++consecutive_divergences_ > cfg_.max_consecutive_divergences)
      throw TrainingAborted("training aborted after " + std::to_string(consecutive_divergences_) +
                            " consecutive diverged steps (last: " + e.what() + ")");
    warn("step " + std::to_string(rep.step) + " diverged; batch discarded and re-seeded");
    return rep;
  }
  consecutive_divergences_ = 0;

  Gradients<float> normed = normalize_gradients(std::move(total));
  auto params = parameter_views(model_);
  auto grads = gradient_views(normed);
  adam_.step(params, grads, rep.lr);

  for (std::size_t b = 0; b < rep.batch.size(); ++b) pool_.states[rep.batch[b]] = std::move(x[b]);
  return rep;
}

std::vector<std::uint8_t> Trainer::encode_checkpoint() const {
  ByteWriter w;
  w.put_magic("RDCK");
  w.put(kCheckpointVersion);
  const auto model_bytes = encode_model(model_, {image_hash(bank_->source_image), std::uint64_t(step_)});
  w.put(static_cast<std::uint32_t>(model_bytes.size()));
  w.put_bytes(model_bytes);
  w.put(static_cast<std::uint64_t>(adam_.steps()));
  w.put(adam_.beta1());
  w.put(adam_.beta2());
  w.put(adam_.eps());
  w.put(static_cast<std::uint32_t>(adam_.first_moments().size()));
  for (std::size_t i = 0; i < adam_.first_moments().size(); ++i) {
    const auto& m = adam_.first_moments()[i];
    const auto& v = adam_.second_moments()[i];
    w.put(static_cast<std::uint64_t>(m.size()));
    w.put_array<float>({m.data(), std::size_t(m.size())});
    w.put_array<float>({v.data(), std::size_t(v.size())});
  }
  w.put(static_cast<std::uint64_t>(step_));
  w.put(static_cast<std::uint32_t>(consecutive_divergences_));
  w.put(cfg_.rng_seed);
  w.put_string(rng_state(batch_rng_));
  w.put_string(rng_state(seed_rng_));
  w.put_string(rng_state(unroll_rng_));
  w.put(pool_.digest());
  w.put_checksum();
  return w.bytes();
}

void Trainer::checkpoint(const std::filesystem::path& path) const {
  ByteWriter w;
  w.put_bytes(encode_checkpoint());
  w.save(path);
}

void Trainer::restore(const std::filesystem::path& path) {
  ByteReader r = ByteReader::open(path, "checkpoint " + path.string());
  auto bytes = r.get_bytes(r.remaining());
  restore_bytes({bytes.begin(), bytes.end()}, "checkpoint " + path.string());
}

void Trainer::restore_bytes(std::vector<std::uint8_t> bytes, const std::string& what) {
  ByteReader r(std::move(bytes), what);
  r.expect_magic("RDCK");
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) r.fail("unsupported version " + std::to_string(version));
  const auto model_len = r.get<std::uint32_t>();
  auto mb = r.get_bytes(model_len);
  ModelFile mf = decode_model({mb.begin(), mb.end()}, what + " (model)");
  const auto t = r.get<std::uint64_t>();
  r.get<double>();
  r.get<double>();
  r.get<double>();
  const auto tensors = r.get<std::uint32_t>();
  if (tensors > 8) r.fail("implausible optimizer tensor count");
  std::vector<Vector<float>> m(tensors), v(tensors);
  for (std::uint32_t i = 0; i < tensors; ++i) {
    const auto n = r.get<std::uint64_t>();
    if (n > (std::uint64_t(1) << 32)) r.fail("implausible moment size");
    auto mv = r.get_array<float>(n);
    auto vv = r.get_array<float>(n);
    m[i] = Eigen::Map<Vector<float>>(mv.data(), Index(n));
    v[i] = Eigen::Map<Vector<float>>(vv.data(), Index(n));
  }
  const auto step = r.get<std::uint64_t>();
  const auto divergences = r.get<std::uint32_t>();
  const auto seed = r.get<std::uint64_t>();
  const auto s_batch = r.get_string(1 << 16), s_seed = r.get_string(1 << 16), s_unroll = r.get_string(1 << 16);
  const auto digest = r.get<std::uint64_t>();
  r.verify_checksum();
  r.expect_end();

  if (seed != cfg_.rng_seed) throw IntegrityError(what + ": rng seed differs from this trainer's configuration");
  if (mf.model.channels() != model_.channels() || mf.model.hidden() != model_.hidden() ||
      mf.model.diffusion.mode != model_.diffusion.mode)
    throw IntegrityError(what + ": model shape differs from this trainer's model");
  if (digest != pool_.digest()) throw IntegrityError(what + ": pool digest does not match the live pool");

  Adam<float> adam(tensor_sizes(mf.model));
  adam.set_state(t, std::move(m), std::move(v));
  Rng rb, rs, ru;
  set_rng_state(rb, s_batch);
  set_rng_state(rs, s_seed);
  set_rng_state(ru, s_unroll);

  model_ = std::move(mf.model);
  adam_ = std::move(adam);
  batch_rng_ = rb;
  seed_rng_ = rs;
  unroll_rng_ = ru;
  step_ = static_cast<int>(step);
  consecutive_divergences_ = static_cast<int>(divergences);
}

void write_log_header(std::ostream& os) { os << "step,loss,lr,unroll,seed_injected\n"; }

void write_log_row(std::ostream& os, const StepReport& r) {
  os << r.step << ',' << r.loss << ',' << r.lr << ',' << r.unroll << ',' << (r.seed_injected ? 1 : 0) << '\n';
}

template Gradients<float> normalize_gradients<float>(Gradients<float>);
template Gradients<double> normalize_gradients<double>(Gradients<double>);
template class Adam<float>;
template class Adam<double>;

}  // namespace nrd
