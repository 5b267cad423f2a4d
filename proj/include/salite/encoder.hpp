#pragma once

#include <string>
#include <variant>
#include <vector>

#include "salite/ops.hpp"
#include "salite/params.hpp"

namespace salite {

struct ConvSpec {
  int in_ch, out_ch, kernel;
  int stride = 1;
  int pad = 0;
  int dilation = 1;

  long long param_count() const {
    return static_cast<long long>(in_ch) * out_ch * kernel * kernel + out_ch;
  }
};

struct PoolSpec {
  PoolKind kind = PoolKind::max;
  int kernel = 3;
  int stride = 2;
};

/// SqueezeNet block: 1x1 squeeze, then parallel 1x1 and 3x3 expands concatenated.
struct FireSpec {
  int in_ch, squeeze_ch, expand1_ch, expand3_ch;

  int out_ch() const { return expand1_ch + expand3_ch; }

  long long param_count() const {
    return ConvSpec{in_ch, squeeze_ch, 1}.param_count() + ConvSpec{squeeze_ch, expand1_ch, 1}.param_count() +
           ConvSpec{squeeze_ch, expand3_ch, 3}.param_count();
  }

  void validate() const {
    if (in_ch <= 0 || squeeze_ch <= 0 || expand1_ch <= 0 || expand3_ch <= 0)
      throw std::invalid_argument("FireSpec: channel counts must be positive");
    if (squeeze_ch > out_ch())
      throw std::invalid_argument("FireSpec: squeeze wider than expand output");
  }
};

using LayerSpec = std::variant<ConvSpec, PoolSpec, FireSpec>;

struct EncoderLayer {
  std::string name;
  LayerSpec spec;
  bool tap = false;   // output forwarded to the decoder as a skip connection
  bool tail = false;  // part of the dilated 1024-channel head after the Fire stack
};

/// Ordered layer plan. Conv layers are followed by ReLU.
struct EncoderSpec {
  std::vector<EncoderLayer> layers;
  int input_size = 224;  // square input extent the model accepts

  /// Modified SqueezeNet v1.1: conv1 3x3/2, three Fire at 1/4, five Fire at 1/8
  /// with the last pool dropped, then a dilation-12 3x3 conv and a 1x1 conv.
  /// `width_div` divides every channel count (minimum 1) for scaled-down variants.
  static EncoderSpec squeezenet(int width_div = 1, int input_size = 224) {
    auto w = [width_div](int c) { return std::max(1, c / width_div); };
    EncoderSpec s;
    s.input_size = input_size;
    int ch = w(64);
    s.layers.push_back({"conv1", ConvSpec{3, ch, 3, 2, 0, 1}, true});
    s.layers.push_back({"pool1", PoolSpec{}});
    const int fires[8][3] = {{16, 64, 64},   {16, 64, 64},   {32, 128, 128}, {32, 128, 128},
                             {48, 192, 192}, {48, 192, 192}, {64, 256, 256}, {64, 256, 256}};
    for (int i = 0; i < 8; ++i) {
      FireSpec f{ch, w(fires[i][0]), w(fires[i][1]), w(fires[i][2])};
      ch = f.out_ch();
      s.layers.push_back({"fire" + std::to_string(i + 2), f, i == 2 || i == 7});
      if (i == 2) s.layers.push_back({"pool4", PoolSpec{}});
    }
    const int tail = w(1024);
    s.layers.push_back({"tail_dilated", ConvSpec{ch, tail, 3, 1, 12, 12}, false, true});
    s.layers.push_back({"tail_pointwise", ConvSpec{tail, tail, 1}, false, true});
    return s;
  }

  int fire_count() const {
    int n = 0;
    for (const auto& l : layers) n += std::holds_alternative<FireSpec>(l.spec);
    return n;
  }

  std::vector<int> tap_channels() const {
    std::vector<int> out;
    int ch = 3;
    for (const auto& l : layers) {
      ch = out_channels_of(l.spec, ch);
      if (l.tap) out.push_back(ch);
    }
    return out;
  }

  int bottleneck_channels() const {
    int ch = 3;
    for (const auto& l : layers) ch = out_channels_of(l.spec, ch);
    return ch;
  }

  /// Spatial extents of the taps for a square input.
  std::vector<int> tap_extents(int input) const {
    std::vector<int> out;
    int e = input;
    for (const auto& l : layers) {
      if (const auto* c = std::get_if<ConvSpec>(&l.spec))
        e = conv_out_extent(e, c->kernel, c->stride, c->pad, c->dilation);
      else if (const auto* p = std::get_if<PoolSpec>(&l.spec))
        e = conv_out_extent(e, p->kernel, p->stride, 0, 1);
      if (l.tap) out.push_back(e);
    }
    return out;
  }

  /// Closed-form sum of Cin*Cout*k*k + Cout over all layers.
  long long param_count(bool include_tail = true) const {
    long long n = 0;
    for (const auto& l : layers) {
      if (l.tail && !include_tail) continue;
      if (const auto* c = std::get_if<ConvSpec>(&l.spec)) n += c->param_count();
      if (const auto* f = std::get_if<FireSpec>(&l.spec)) n += f->param_count();
    }
    return n;
  }

  void validate() const {
    int convs = 0, taps = 0, ch = 3;
    for (const auto& l : layers) {
      taps += l.tap;
      if (const auto* c = std::get_if<ConvSpec>(&l.spec)) {
        convs += !l.tail;
        if (c->in_ch != ch) throw std::invalid_argument("EncoderSpec: " + l.name + " input channels");
      }
      if (const auto* f = std::get_if<FireSpec>(&l.spec)) {
        f->validate();
        if (f->in_ch != ch) throw std::invalid_argument("EncoderSpec: " + l.name + " input channels");
      }
      ch = out_channels_of(l.spec, ch);
    }
    if (fire_count() != 8) throw std::invalid_argument("EncoderSpec: expected 8 Fire modules");
    if (convs != 1) throw std::invalid_argument("EncoderSpec: expected 1 leading conv block");
    if (taps != 3) throw std::invalid_argument("EncoderSpec: expected 3 skip taps");
    const auto ext = tap_extents(input_size);
    if (ext.back() < 1 || !(ext[0] > ext[1] && ext[1] > ext[2]))
      throw std::invalid_argument("EncoderSpec: input size " + std::to_string(input_size) + " too small");
  }

 private:
  static int out_channels_of(const LayerSpec& spec, int in) {
    if (const auto* c = std::get_if<ConvSpec>(&spec)) return c->out_ch;
    if (const auto* f = std::get_if<FireSpec>(&spec)) return f->out_ch();
    return in;
  }
};

template <Real T>
struct FireWeights {
  ConvLayer<T> squeeze, expand1, expand3;

  static FireWeights create(ParamStore<T>& store, const std::string& prefix, const FireSpec& f,
                            ParamGroup group) {
    return {ConvLayer<T>::create(store, prefix + ".squeeze", prefix, f.in_ch, f.squeeze_ch, 1, {}, group),
            ConvLayer<T>::create(store, prefix + ".expand1", prefix, f.squeeze_ch, f.expand1_ch, 1, {}, group),
            ConvLayer<T>::create(store, prefix + ".expand3", prefix, f.squeeze_ch, f.expand3_ch, 3, {1, 1, 1},
                                 group)};
  }
};

template <Real T>
Tensor<T> fire_forward(const Tensor<T>& x, const FireSpec& spec, const FireWeights<T>& w) {
  if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(spec.in_ch))
    throw DimensionError("fire: input channels", spec.in_ch, x.rank() == 4 ? x.dim(1) : 0);
  const auto s = relu(w.squeeze(x));
  return concat<T>({relu(w.expand1(s)), relu(w.expand3(s))}, 1);
}

template <Real T>
struct EncoderOutput {
  std::vector<Tensor<T>> skips;  // shallow to deep
  Tensor<T> bottleneck;
};

template <Real T>
class Encoder {
 public:
  Encoder(EncoderSpec spec, ParamStore<T>& store) : spec_(std::move(spec)) {
    spec_.validate();
    for (const auto& l : spec_.layers) {
      const std::string prefix = "encoder." + l.name;
      if (const auto* c = std::get_if<ConvSpec>(&l.spec))
        weights_.emplace_back(ConvLayer<T>::create(store, prefix, prefix, c->in_ch, c->out_ch, c->kernel,
                                                   {c->stride, c->pad, c->dilation}, ParamGroup::encoder));
      else if (const auto* f = std::get_if<FireSpec>(&l.spec))
        weights_.emplace_back(FireWeights<T>::create(store, prefix, *f, ParamGroup::encoder));
      else
        weights_.emplace_back(std::monostate{});
    }
  }

  const EncoderSpec& spec() const { return spec_; }

  /// img: [N,3,S,S] normalized image batch.
  EncoderOutput<T> operator()(const Tensor<T>& img) const {
    if (img.rank() != 4 || img.dim(1) != 3)
      throw DimensionError("encoder: expected [N,3,H,W] input, got " + to_string(img.shape()));
    const auto s = static_cast<std::size_t>(spec_.input_size);
    if (img.dim(2) != s || img.dim(3) != s)
      throw DimensionError("encoder: input extent " + to_string(img.shape()) + " vs model input size", s,
                           img.dim(2) != s ? img.dim(2) : img.dim(3));
    EncoderOutput<T> out;
    Tensor<T> x = img;
    for (std::size_t i = 0; i < spec_.layers.size(); ++i) {
      const auto& l = spec_.layers[i];
      if (const auto* c = std::get_if<ConvLayer<T>>(&weights_[i]))
        x = relu((*c)(x));
      else if (const auto* f = std::get_if<FireWeights<T>>(&weights_[i]))
        x = fire_forward(x, std::get<FireSpec>(l.spec), *f);
      else {
        const auto& p = std::get<PoolSpec>(l.spec);
        x = pool2d(x, p.kind, p.kernel, p.stride);
      }
      if (l.tap) out.skips.push_back(x);
    }
    out.bottleneck = x;
    return out;
  }

 private:
  EncoderSpec spec_;
  std::vector<std::variant<std::monostate, ConvLayer<T>, FireWeights<T>>> weights_;
};

}  // namespace salite
