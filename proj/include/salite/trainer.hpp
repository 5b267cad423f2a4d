#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <ostream>
#include <string>
#include <vector>

#include "salite/checkpoint.hpp"
#include "salite/io.hpp"
#include "salite/losses.hpp"
#include "salite/model.hpp"
#include "salite/tape.hpp"

namespace salite {

struct TrainConfig {
  double lr_decoder = 0.01;
  double lr_encoder = 0.001;
  double decay = 0.1;
  int decay_every = 5000;
  int batch = 5;
  int max_steps = 2000;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  std::uint64_t seed = 42;
  bool flip_augment = false;
  int checkpoint_every = 500;

  void validate() const {
    if (!(lr_decoder >= 0 && lr_encoder >= 0)) throw std::invalid_argument("TrainConfig: learning rates must be >= 0");
    if (!(decay > 0 && decay <= 1)) throw std::invalid_argument("TrainConfig: decay must be in (0, 1]");
    if (decay_every < 1) throw std::invalid_argument("TrainConfig: decay_every must be >= 1");
    if (batch < 1) throw std::invalid_argument("TrainConfig: batch must be >= 1");
    if (max_steps < 0) throw std::invalid_argument("TrainConfig: max_steps must be >= 0");
    if (!(momentum >= 0 && momentum < 1)) throw std::invalid_argument("TrainConfig: momentum must be in [0, 1)");
    if (weight_decay < 0) throw std::invalid_argument("TrainConfig: weight_decay must be >= 0");
    if (checkpoint_every < 1) throw std::invalid_argument("TrainConfig: checkpoint_every must be >= 1");
  }
};

struct LearningRates {
  double encoder;
  double decoder;
};

/// base * decay^floor(step / decay_every) for each group.
inline LearningRates lr_schedule(long long step, const TrainConfig& cfg) {
  const double f = std::pow(cfg.decay, static_cast<double>(step / cfg.decay_every));
  return {cfg.lr_encoder * f, cfg.lr_decoder * f};
}

/// Momentum SGD: v = mu v + g + wd w (wd only where decay is set); w -= lr v.
template <Real T>
class Sgd {
 public:
  explicit Sgd(const ParamStore<T>& store) {
    for (const auto& p : store.all()) velocity_.emplace_back(p.value.numel(), T(0));
  }

  void step(ParamStore<T>& store, const LearningRates& lr, const TrainConfig& cfg) {
    auto& ps = store.all();
    for (std::size_t k = 0; k < ps.size(); ++k) {
      auto& p = ps[k];
      if (!p.value.has_grad()) continue;
      const T rate = static_cast<T>(p.group == ParamGroup::encoder ? lr.encoder : lr.decoder);
      const T mu = static_cast<T>(cfg.momentum), wd = p.decay ? static_cast<T>(cfg.weight_decay) : T(0);
      auto w = p.value.mutable_data();
      auto g = p.value.grad();
      auto& v = velocity_[k];
      for (std::size_t i = 0; i < v.size(); ++i) {
        v[i] = mu * v[i] + g[i] + wd * w[i];
        w[i] -= rate * v[i];
      }
    }
  }

  std::vector<std::vector<T>>& velocity() { return velocity_; }
  const std::vector<std::vector<T>>& velocity() const { return velocity_; }

 private:
  std::vector<std::vector<T>> velocity_;
};

/// Preloaded training images at model resolution, with their masks and boundary weights.
template <Real T>
struct TrainingSet {
  int size = 0;
  std::vector<std::string> names;
  std::vector<std::vector<T>> images;    // 3*S*S normalized
  std::vector<std::vector<T>> masks;     // S*S in {0,1}
  std::vector<std::vector<T>> boundary;  // S*S

  std::size_t count() const { return images.size(); }
};

template <Real T>
TrainingSet<T> load_training_set(const DatasetManifest& m, int size, const LossWeights& lw = {}) {
  if (m.rows.empty()) throw std::invalid_argument("training manifest has no rows");
  TrainingSet<T> ts;
  ts.size = size;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& row = m.rows[i];
    Tensor<T> img, mask;
    try {
      img = load_image<T>(row.image, size);
      mask = load_mask<T>(row.mask, size);
    } catch (const IoError& e) {
      throw IoError("manifest row " + std::to_string(i + 1) + ": " + e.what());
    }
    auto bw = boundary_weight_map(mask, lw);
    ts.names.push_back(row.image.stem().string());
    ts.images.emplace_back(img.data().begin(), img.data().end());
    ts.masks.emplace_back(mask.data().begin(), mask.data().end());
    ts.boundary.emplace_back(bw.data().begin(), bw.data().end());
  }
  return ts;
}

template <Real T>
struct Batch {
  Tensor<T> images;    // [B,3,S,S]
  Tensor<T> masks;     // [B,1,S,S]
  Tensor<T> boundary;  // [B,1,S,S]
};

namespace detail {

template <Real T>
void append_plane(std::vector<T>& dst, const T* src, int size, bool flip) {
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) dst.push_back(src[std::size_t(y) * size + (flip ? size - 1 - x : x)]);
}

}  // namespace detail

template <Real T>
Batch<T> make_batch(const TrainingSet<T>& ts, const std::vector<std::uint32_t>& idx, const std::vector<bool>& flips) {
  const auto s = static_cast<std::size_t>(ts.size), plane = s * s, b = idx.size();
  std::vector<T> img, mask, bw;
  img.reserve(b * 3 * plane);
  mask.reserve(b * plane);
  bw.reserve(b * plane);
  for (std::size_t k = 0; k < b; ++k) {
    const auto i = idx[k];
    for (std::size_t c = 0; c < 3; ++c) detail::append_plane(img, ts.images[i].data() + c * plane, ts.size, flips[k]);
    detail::append_plane(mask, ts.masks[i].data(), ts.size, flips[k]);
    detail::append_plane(bw, ts.boundary[i].data(), ts.size, flips[k]);
  }
  return {Tensor<T>(Shape{b, 3, s, s}, std::move(img)), Tensor<T>(Shape{b, 1, s, s}, std::move(mask)),
          Tensor<T>(Shape{b, 1, s, s}, std::move(bw))};
}

/// Seeded epoch shuffling. The RNG also draws the flips, so (rng, cursor) is the whole data-order state.
class Batcher {
 public:
  Batcher(std::size_t n, std::uint64_t seed) : n_(n), rng_(seed) {}

  /// Up to `batch` indices; the last batch of an epoch may be short.
  std::vector<std::uint32_t> next(int batch, bool flip, std::vector<bool>& flips) {
    if (cursor_.order.empty()) {
      cursor_.order.resize(n_);
      std::iota(cursor_.order.begin(), cursor_.order.end(), 0u);
      for (std::size_t i = n_; i > 1; --i) std::swap(cursor_.order[i - 1], cursor_.order[rng_.below(i)]);
    }
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(batch), n_ - cursor_.position);
    std::vector<std::uint32_t> idx(cursor_.order.begin() + static_cast<std::ptrdiff_t>(cursor_.position),
                                   cursor_.order.begin() + static_cast<std::ptrdiff_t>(cursor_.position + take));
    flips.assign(take, false);
    if (flip)
      for (std::size_t k = 0; k < take; ++k) flips[k] = rng_.below(2) == 1;
    cursor_.position += take;
    if (cursor_.position == n_) {
      ++cursor_.epoch;
      cursor_.position = 0;
      cursor_.order.clear();
    }
    return idx;
  }

  const DataCursor& cursor() const { return cursor_; }
  const Rng& rng() const { return rng_; }
  void restore(const DataCursor& c, const Rng::State& s) {
    if (!c.order.empty() && c.order.size() != n_)
      throw CheckpointError(CheckpointErrorKind::dimension_mismatch,
                            "data order covers " + std::to_string(c.order.size()) + " items, dataset has " + std::to_string(n_));
    cursor_ = c;
    rng_.set_state(s);
  }

 private:
  std::size_t n_;
  Rng rng_;
  DataCursor cursor_;
};

struct StepStats {
  double loss = 0, bce = 0, huber = 0, grad_norm = 0;
  LearningRates lr{0, 0};
};

/// forward -> total loss -> backward -> SGD update -> zero gradients.
template <Real T>
StepStats train_step(SaliteModel<T>& model, Sgd<T>& opt, const Batch<T>& batch, const TrainConfig& cfg, long long step,
                     const LossWeights& lw = {}) {
  if (batch.images.dim(0) > static_cast<std::size_t>(cfg.batch))
    throw DimensionError("train_step: batch larger than cfg.batch", static_cast<std::size_t>(cfg.batch), batch.images.dim(0));
  StepStats st;
  auto terms = total_loss(model(batch.images), batch.masks, lw, batch.boundary);
  st.bce = terms.bce.item();
  st.huber = terms.huber.item();
  st.loss = terms.total.item();
  if (!std::isfinite(st.bce)) throw NumericError("step " + std::to_string(step) + ": non-finite BCE term");
  if (!std::isfinite(st.huber)) throw NumericError("step " + std::to_string(step) + ": non-finite Huber term");
  backward(terms.total);
  double sq = 0;
  for (const auto& p : model.params().all())
    if (p.value.has_grad())
      for (auto g : p.value.grad()) sq += double(g) * double(g);
  st.grad_norm = std::sqrt(sq);
  if (!std::isfinite(st.grad_norm)) throw NumericError("step " + std::to_string(step) + ": non-finite gradient");
  st.lr = lr_schedule(step, cfg);
  opt.step(model.params(), st.lr, cfg);
  model.params().zero_grad();
  return st;
}

/// Everything needed to continue a run bit-exactly.
template <Real T>
struct TrainState {
  long long step = 0;
  Sgd<T> opt;
  Batcher batcher;

  TrainState(const SaliteModel<T>& model, std::size_t n, std::uint64_t seed)
      : opt(model.params()), batcher(n, seed ^ 0xD1B54A32D192ED03ull) {}
};

template <Real T>
Checkpoint snapshot(const SaliteModel<T>& model, const TrainState<T>& st, const std::string& config_text) {
  Checkpoint c;
  c.step = static_cast<std::uint64_t>(st.step);
  c.config = config_text;
  c.rng = st.batcher.rng().state();
  c.cursor = st.batcher.cursor();
  const auto& ps = model.params().all();
  for (const auto& p : ps) c.tensors.push_back(make_record(p.name, p.value));
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const auto& v = st.opt.velocity()[k];
    c.tensors.push_back({"momentum/" + ps[k].name, ps[k].value.shape(), std::vector<float>(v.begin(), v.end())});
  }
  return c;
}

/// Validates the whole checkpoint against model and state, then copies.
template <Real T>
void resume_from(const Checkpoint& c, SaliteModel<T>& model, TrainState<T>& st) {
  const auto& ps = model.params().all();
  std::vector<const TensorRecord*> mom(ps.size(), nullptr);
  for (std::size_t k = 0; k < ps.size(); ++k) {
    mom[k] = c.find("momentum/" + ps[k].name);
    if (!mom[k]) throw CheckpointError(CheckpointErrorKind::missing_tensor, "momentum/" + ps[k].name);
    if (mom[k]->shape != ps[k].value.shape())
      throw CheckpointError(CheckpointErrorKind::dimension_mismatch, "momentum/" + ps[k].name);
  }
  for (const auto& t : c.tensors)
    if (t.name.rfind("momentum/", 0) == 0 && !model.params().find(t.name.substr(9)))
      throw CheckpointError(CheckpointErrorKind::unknown_tensor, t.name);
  Batcher probe = st.batcher;
  probe.restore(c.cursor, c.rng);
  restore_params(model.params(), c);
  for (std::size_t k = 0; k < ps.size(); ++k)
    std::transform(mom[k]->values.begin(), mom[k]->values.end(), st.opt.velocity()[k].begin(),
                   [](float v) { return static_cast<T>(v); });
  st.batcher = probe;
  st.step = static_cast<long long>(c.step);
}

struct TrainOptions {
  std::filesystem::path out_dir;  // checkpoints and train.log; empty = no files
  std::ostream* log = nullptr;    // progress lines
  std::string config_text;        // stored in every checkpoint
  LossWeights loss;
  const Checkpoint* resume = nullptr;
  long long stop_at = -1;  // halt (with a checkpoint) before max_steps; -1 = run to max_steps
};

inline std::filesystem::path checkpoint_path(const std::filesystem::path& dir, long long step) {
  char name[32];
  std::snprintf(name, sizeof name, "step-%06lld.salt", step);
  return dir / name;
}

/// Runs to cfg.max_steps (or opts.stop_at), logging `step<TAB>loss<TAB>lr_enc<TAB>lr_dec` per step and
/// checkpointing every cfg.checkpoint_every steps and at the end. Returns the final checkpoint.
template <Real T>
Checkpoint train_loop(const TrainingSet<T>& data, SaliteModel<T>& model, const TrainConfig& cfg, const TrainOptions& opts,
                      std::vector<StepStats>* history = nullptr) {
  cfg.validate();
  opts.loss.validate();
  if (data.count() == 0) throw std::invalid_argument("train_loop: empty training set");
  if (data.size != model.spec().input_size())
    throw DimensionError("train_loop: data extent vs model input size", static_cast<std::size_t>(model.spec().input_size()),
                         static_cast<std::size_t>(data.size));
  TrainState<T> st(model, data.count(), cfg.seed);
  if (opts.resume) resume_from(*opts.resume, model, st);

  std::ofstream file_log;
  if (!opts.out_dir.empty()) {
    std::error_code ec;
    std::filesystem::create_directories(opts.out_dir, ec);
    if (ec) throw IoError(opts.out_dir.string() + ": " + ec.message());
    file_log.open(opts.out_dir / "train.log", opts.resume ? std::ios::app : std::ios::trunc);
    if (!file_log) throw IoError((opts.out_dir / "train.log").string() + ": cannot open for writing");
  }
  auto save = [&](const Checkpoint& c) {
    if (opts.out_dir.empty()) return;
    save_checkpoint(c, checkpoint_path(opts.out_dir, st.step));
    save_checkpoint(c, opts.out_dir / "last.salt");
  };

  const long long end = opts.stop_at >= 0 ? std::min<long long>(opts.stop_at, cfg.max_steps) : cfg.max_steps;
  if (st.step >= end) {
    auto c = snapshot(model, st, opts.config_text);
    save(c);
    return c;
  }
  std::vector<bool> flips;
  while (st.step < end) {
    const auto idx = st.batcher.next(cfg.batch, cfg.flip_augment, flips);
    const auto stats = train_step(model, st.opt, make_batch(data, idx, flips), cfg, st.step, opts.loss);
    ++st.step;
    if (history) history->push_back(stats);
    char line[128];
    std::snprintf(line, sizeof line, "%lld\t%.6f\t%.6g\t%.6g\n", st.step, stats.loss, stats.lr.encoder, stats.lr.decoder);
    if (opts.log) *opts.log << line << std::flush;
    if (file_log) file_log << line << std::flush;
    if (st.step % cfg.checkpoint_every == 0 || st.step == end) save(snapshot(model, st, opts.config_text));
  }
  return snapshot(model, st, opts.config_text);
}

}  // namespace salite
