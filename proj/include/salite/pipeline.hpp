#pragma once

#include <algorithm>
#include <exception>
#include <filesystem>
#include <string>
#include <thread>
#include <vector>

#include "salite/config.hpp"
#include "salite/metrics.hpp"
#include "salite/synth.hpp"
#include "salite/trainer.hpp"

namespace salite {

inline ModelSpec model_spec_from(const RunConfig& cfg) {
  const int size = static_cast<int>(cfg.integer("model.input_size"));
  const int div = static_cast<int>(cfg.integer("model.width_div"));
  if (size < 32) throw ConfigError("model.input_size", "must be >= 32");
  if (div < 1) throw ConfigError("model.width_div", "must be >= 1");
  auto spec = ModelSpec::standard(size, div);
  auto& g = spec.decoder.global;
  g.scales = cfg.int_list("attention.scales");
  if (cfg.integer("attention.renet_hidden") > 0) g.renet_hidden = static_cast<int>(cfg.integer("attention.renet_hidden"));
  const auto& combine = cfg.text("attention.combine");
  if (combine == "sum")
    g.combine = ScaleCombine::sum;
  else if (combine == "concat")
    g.combine = ScaleCombine::concat;
  else
    throw ConfigError("attention.combine", "expected sum or concat, got '" + combine + "'");
  spec.decoder.local.kernel = static_cast<int>(cfg.integer("attention.local_kernel"));
  spec.decoder.local.dilation = static_cast<int>(cfg.integer("attention.local_dilation"));
  spec.validate();
  return spec;
}

inline LossWeights loss_weights_from(const RunConfig& cfg) {
  LossWeights lw;
  lw.lambda1 = cfg.real("loss.lambda1");
  lw.lambda2 = cfg.real("loss.lambda2");
  lw.w0 = cfg.real("loss.w0");
  lw.sigma = cfg.real("loss.sigma");
  lw.delta = cfg.real("loss.delta");
  lw.patch = static_cast<int>(cfg.integer("loss.patch"));
  lw.eq5_strict = cfg.boolean("loss.eq5_strict");
  lw.clamp = cfg.real("loss.clamp");
  lw.validate();
  return lw;
}

inline TrainConfig train_config_from(const RunConfig& cfg) {
  TrainConfig tc;
  tc.lr_decoder = cfg.real("trainer.lr_decoder");
  tc.lr_encoder = cfg.real("trainer.lr_encoder");
  tc.decay = cfg.real("trainer.decay");
  tc.decay_every = static_cast<int>(cfg.integer("trainer.decay_every"));
  tc.batch = static_cast<int>(cfg.integer("trainer.batch"));
  tc.max_steps = static_cast<int>(cfg.integer("trainer.max_steps"));
  tc.momentum = cfg.real("trainer.momentum");
  tc.weight_decay = cfg.real("trainer.weight_decay");
  tc.seed = static_cast<std::uint64_t>(cfg.integer("trainer.seed"));
  tc.flip_augment = cfg.boolean("trainer.flip_augment");
  tc.checkpoint_every = static_cast<int>(cfg.integer("trainer.checkpoint_every"));
  tc.validate();
  return tc;
}

inline SynthSpec synth_spec_from(const RunConfig& cfg) {
  SynthSpec s;
  s.seed = static_cast<std::uint64_t>(cfg.integer("synth.seed"));
  s.count = static_cast<int>(cfg.integer("synth.count"));
  s.size = static_cast<int>(cfg.integer("synth.size"));
  s.shapes_min = static_cast<int>(cfg.integer("synth.shapes_min"));
  s.shapes_max = static_cast<int>(cfg.integer("synth.shapes_max"));
  s.kinds.clear();
  for (const auto& k : detail::split(cfg.text("synth.kinds"), ',')) {
    if (k == "ellipse") s.kinds.push_back(ShapeKind::ellipse);
    else if (k == "rectangle") s.kinds.push_back(ShapeKind::rectangle);
    else if (k == "triangle") s.kinds.push_back(ShapeKind::triangle);
    else throw ConfigError("synth.kinds", "unknown shape kind '" + k + "'");
  }
  s.octaves = static_cast<int>(cfg.integer("synth.octaves"));
  s.noise_amp = cfg.real("synth.noise_amp");
  s.contrast_lo = cfg.real("synth.contrast_lo");
  s.contrast_hi = cfg.real("synth.contrast_hi");
  s.validate();
  return s;
}

/// Saliency for a batch [N,3,S,S] without recording a graph.
template <Real T>
Tensor<T> predict(const SaliteModel<T>& model, const Tensor<T>& images) {
  NoGradGuard ng;
  return model(images);
}

namespace detail {

template <Real T>
Tensor<T> as_batch(const Tensor<T>& img) {
  return Tensor<T>(Shape{1, img.dim(0), img.dim(1), img.dim(2)}, std::vector<T>(img.data().begin(), img.data().end()));
}

inline std::string row_label(std::size_t i, const ManifestRow& r) {
  return "manifest row " + std::to_string(i + 1) + " (" + r.image.filename().string() + ")";
}

}  // namespace detail

/// Scores every manifest row with the model, at model resolution, in manifest order.
/// With threads > 1 rows are split across workers; results do not depend on the thread count.
template <Real T>
EvalReport evaluate_model(const SaliteModel<T>& model, const DatasetManifest& m, double beta2 = 0.3,
                          std::vector<Tensor<T>>* maps = nullptr, int threads = 1) {
  const int size = model.spec().input_size();
  const std::size_t n = m.rows.size();
  EvalReport r;
  r.dataset = m.source;
  r.images.resize(n);
  std::vector<Tensor<T>> out(maps ? n : 0);
  std::vector<std::exception_ptr> errors(n);
  auto work = [&](std::size_t first, std::size_t stride) {
    for (std::size_t i = first; i < n; i += stride) {
      const auto& row = m.rows[i];
      try {
        Tensor<T> img, mask;
        try {
          img = load_image<T>(row.image, size);
          mask = load_mask<T>(row.mask, size);
        } catch (const IoError& e) {
          throw IoError(detail::row_label(i, row) + ": " + e.what());
        }
        auto s = predict(model, detail::as_batch(img));
        r.images[i] = score_image<T, T>(row.image.stem().string(), s.data(), mask.data(), beta2);
        if (maps) out[i] = s;
      } catch (...) {
        errors[i] = std::current_exception();
        return;
      }
    }
  };
  const std::size_t workers = std::clamp<std::size_t>(static_cast<std::size_t>(std::max(threads, 1)), 1, std::max<std::size_t>(n, 1));
  if (workers == 1) {
    work(0, 1);
  } else {
    std::vector<std::thread> pool;
    for (std::size_t t = 0; t < workers; ++t) pool.emplace_back(work, t, workers);
    for (auto& t : pool) t.join();
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  if (maps)
    for (auto& s : out) maps->push_back(s);
  finalize(r);
  return r;
}

/// Scores stored maps `<map_dir>/<image stem>.pgm`; masks are resized to `size`, maps must already be that size.
inline EvalReport evaluate_maps(const std::filesystem::path& map_dir, const DatasetManifest& m, int size, double beta2 = 0.3) {
  EvalReport r;
  r.dataset = m.source;
  for (std::size_t i = 0; i < m.rows.size(); ++i) {
    const auto& row = m.rows[i];
    Tensor<double> s, mask;
    try {
      s = load_map<double>(map_dir / (row.image.stem().string() + ".pgm"));
      mask = load_mask<double>(row.mask, size);
    } catch (const IoError& e) {
      throw IoError(detail::row_label(i, row) + ": " + e.what());
    }
    if (s.shape() != mask.shape())
      throw DimensionError(detail::row_label(i, row) + ": map " + to_string(s.shape()) + " vs mask " + to_string(mask.shape()));
    r.images.push_back(score_image<double, double>(row.image.stem().string(), s.data(), mask.data(), beta2));
  }
  finalize(r);
  return r;
}

}  // namespace salite
