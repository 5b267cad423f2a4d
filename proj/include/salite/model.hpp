#pragma once

#include <cstdint>

#include "salite/decoder.hpp"
#include "salite/encoder.hpp"

namespace salite {

struct ModelSpec {
  EncoderSpec encoder;
  DecoderSpec decoder;

  int input_size() const { return encoder.input_size; }

  /// Standard architecture; `width_div` > 1 gives the reduced-width desk-scale variant.
  static ModelSpec standard(int input_size = 224, int width_div = 1) {
    ModelSpec m;
    m.encoder = EncoderSpec::squeezenet(width_div, input_size);
    m.decoder = DecoderSpec::standard(m.encoder.tap_extents(input_size), input_size, width_div);
    return m;
  }

  void validate() const {
    encoder.validate();
    decoder.validate();
  }
};

template <Real T>
class SaliteModel {
 public:
  explicit SaliteModel(ModelSpec spec, std::uint64_t seed = 0)
      : spec_(std::move(spec)), store_(seed), encoder_((spec_.validate(), spec_.encoder), store_) {
    decoder_ = DecoderWeights<T>::create(store_, spec_.decoder, spec_.encoder.tap_channels(),
                                         spec_.encoder.bottleneck_channels());
  }

  SaliteModel(const SaliteModel&) = delete;
  SaliteModel& operator=(const SaliteModel&) = delete;

  const ModelSpec& spec() const { return spec_; }
  ParamStore<T>& params() { return store_; }
  const ParamStore<T>& params() const { return store_; }

  /// img: [N,3,S,S] normalized; returns saliency [N,1,S,S] in (0,1).
  Tensor<T> operator()(const Tensor<T>& img, ForwardTrace<T>* trace = nullptr) const {
    const auto enc = encoder_(img);
    Tensor<T> d = enc.bottleneck;
    const auto& stages = spec_.decoder.stages;
    for (std::size_t i = 0; i < stages.size(); ++i) {
      const auto& s = stages[i];
      const auto& w = decoder_.stages[i];
      if (s.skip == SkipSource::encoder_tap)
        d = fuse_features(d, enc.skips[static_cast<std::size_t>(s.tap)], *w.fuse);
      else if (s.skip == SkipSource::image)
        d = fuse_features(d, resize_bilinear(img, s.resolution, s.resolution), *w.fuse);
      d = decode_step(d, s.kind, w, spec_.decoder, trace);
    }
    return saliency_head(d, decoder_.head);
  }

 private:
  ModelSpec spec_;
  ParamStore<T> store_;
  Encoder<T> encoder_;
  DecoderWeights<T> decoder_;
};

template <Real T>
Tensor<T> salite_forward(const Tensor<T>& img, const SaliteModel<T>& model, ForwardTrace<T>* trace = nullptr) {
  return model(img, trace);
}

}  // namespace salite
