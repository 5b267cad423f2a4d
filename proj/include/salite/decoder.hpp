#pragma once

#include <optional>
#include <string>
#include <vector>

#include "salite/attention.hpp"

namespace salite {

enum class AttentionKind { global, local, none };

inline const char* to_string(AttentionKind k) {
  switch (k) {
    case AttentionKind::global: return "global";
    case AttentionKind::local: return "local";
    default: return "none";
  }
}

/// Where a stage's fusion input comes from.
enum class SkipSource { none, encoder_tap, image };

struct StageSpec {
  int resolution;  // working extent at the standard input size
  int channels;    // C^i
  AttentionKind kind;
  SkipSource skip = SkipSource::none;
  int tap = -1;  // encoder tap index when skip == encoder_tap
};

struct DecoderSpec {
  std::vector<StageSpec> stages;
  GlobalAttentionConfig global;
  LocalAttentionConfig local;

  /// 27 global (fused with the 27 tap) -> 27 global -> 55 local -> 111 local -> full-size plain
  /// (fused with the image), channels (256,256,128,64,32) divided by `width_div`.
  static DecoderSpec standard(const std::vector<int>& tap_extents, int input_size, int width_div = 1) {
    auto w = [width_div](int c) { return std::max(1, c / width_div); };
    DecoderSpec d;
    d.stages = {{tap_extents[2], w(256), AttentionKind::global, SkipSource::encoder_tap, 2},
                {tap_extents[2], w(256), AttentionKind::global},
                {tap_extents[1], w(128), AttentionKind::local, SkipSource::encoder_tap, 1},
                {tap_extents[0], w(64), AttentionKind::local, SkipSource::encoder_tap, 0},
                {input_size, w(32), AttentionKind::none, SkipSource::image}};
    d.global.renet_hidden = w(256);
    return d;
  }

  int count(AttentionKind k) const {
    int n = 0;
    for (const auto& s : stages) n += s.kind == k;
    return n;
  }

  void validate() const {
    if (stages.size() != 5) throw std::invalid_argument("DecoderSpec: expected 5 stages");
    if (count(AttentionKind::global) != 2 || count(AttentionKind::local) != 2)
      throw std::invalid_argument("DecoderSpec: expected 2 global and 2 local stages");
    for (std::size_t i = 1; i < stages.size(); ++i)
      if (stages[i].resolution < stages[i - 1].resolution)
        throw std::invalid_argument("DecoderSpec: stage resolutions must be non-decreasing");
    for (const auto& s : stages) {
      if (s.channels < 1) throw std::invalid_argument("DecoderSpec: stage channels must be positive");
      if (s.skip == SkipSource::encoder_tap && (s.tap < 0 || s.tap > 2))
        throw std::invalid_argument("DecoderSpec: tap index out of range");
    }
    global.validate();
    local.validate();
  }
};

template <Real T>
struct StageWeights {
  std::optional<ConvLayer<T>> fuse;  // 3x3 over concat(upsampled previous, skip)
  std::optional<GlobalAttentionWeights<T>> global;
  std::optional<LocalAttentionWeights<T>> local;
  ConvLayer<T> decode;  // 3x3 over concat(F, F_att)
};

/// Attention call counts and, on request, every attention distribution of a forward pass.
template <Real T>
struct ForwardTrace {
  int global_calls = 0;
  int local_calls = 0;
  bool keep_weights = false;
  std::vector<Tensor<T>> global_weights;  // one per scale per global stage
  std::vector<Tensor<T>> local_weights;
};

template <Real T>
Tensor<T> fuse_features(const Tensor<T>& prev, const Tensor<T>& skip, const ConvLayer<T>& conv) {
  require_rank(prev, 4, "fuse previous");
  require_rank(skip, 4, "fuse skip");
  if (skip.dim(2) < prev.dim(2) || skip.dim(3) < prev.dim(3))
    throw DimensionError("fuse: skip " + to_string(skip.shape()) + " smaller than previous " +
                         to_string(prev.shape()));
  if (skip.dim(0) != prev.dim(0)) throw DimensionError("fuse: batch size", prev.dim(0), skip.dim(0));
  auto up = resize_bilinear(prev, static_cast<int>(skip.dim(2)), static_cast<int>(skip.dim(3)));
  return relu(conv(concat<T>({up, skip}, 1)));
}

template <Real T>
Tensor<T> decode_step(const Tensor<T>& f, AttentionKind kind, const StageWeights<T>& w, const DecoderSpec& spec,
                      ForwardTrace<T>* trace = nullptr) {
  Tensor<T> att = f;
  if (kind == AttentionKind::global) {
    if (!w.global) throw std::invalid_argument("decode_step: stage has no global attention weights");
    std::vector<Tensor<T>> alphas;
    att = global_attend_multiscale(f, spec.global, *w.global, trace && trace->keep_weights ? &alphas : nullptr);
    if (trace) {
      ++trace->global_calls;
      for (auto& a : alphas) trace->global_weights.push_back(a);
    }
  } else if (kind == AttentionKind::local) {
    if (!w.local) throw std::invalid_argument("decode_step: stage has no local attention weights");
    Tensor<T> alpha;
    att = local_attend(f, spec.local, *w.local, trace && trace->keep_weights ? &alpha : nullptr);
    if (trace) {
      ++trace->local_calls;
      if (trace->keep_weights) trace->local_weights.push_back(alpha);
    }
  }
  return relu(w.decode(concat<T>({f, att}, 1)));
}

/// 1x1 conv to one channel, then sigmoid.
template <Real T>
Tensor<T> saliency_head(const Tensor<T>& d, const ConvLayer<T>& conv) {
  return sigmoid(conv(d));
}

template <Real T>
struct DecoderWeights {
  std::vector<StageWeights<T>> stages;
  ConvLayer<T> head;

  static DecoderWeights create(ParamStore<T>& store, const DecoderSpec& spec, const std::vector<int>& tap_channels,
                               int bottleneck_channels) {
    spec.validate();
    DecoderWeights dw;
    int prev = bottleneck_channels;
    for (std::size_t i = 0; i < spec.stages.size(); ++i) {
      const auto& s = spec.stages[i];
      const std::string p = "decoder.stage" + std::to_string(i + 1);
      StageWeights<T> sw;
      if (s.skip != SkipSource::none) {
        const int skip_ch = s.skip == SkipSource::image ? 3 : tap_channels[static_cast<std::size_t>(s.tap)];
        sw.fuse = ConvLayer<T>::create(store, p + ".fuse", p + ".fuse", prev + skip_ch, s.channels, 3, {1, 1, 1},
                                       ParamGroup::decoder);
        prev = s.channels;
      }
      if (s.kind == AttentionKind::global)
        sw.global = GlobalAttentionWeights<T>::create(store, p + ".global", prev, spec.global, ParamGroup::decoder);
      if (s.kind == AttentionKind::local)
        sw.local = LocalAttentionWeights<T>::create(store, p + ".local", prev, prev, spec.local, ParamGroup::decoder);
      sw.decode = ConvLayer<T>::create(store, p + ".decode", p + ".decode", 2 * prev, s.channels, 3, {1, 1, 1},
                                       ParamGroup::decoder);
      prev = s.channels;
      dw.stages.push_back(std::move(sw));
    }
    dw.head = ConvLayer<T>::create(store, "decoder.head", "decoder.head", prev, 1, 1, {}, ParamGroup::decoder);
    return dw;
  }
};

}  // namespace salite
