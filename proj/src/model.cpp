#include "warship/model.hpp"

#include <cmath>

#include "warship/rng.hpp"

namespace warship {

void ModelConfig::validate() const {
  if (recurrences < 1) throw ConfigError("model: recurrences must be >= 1");
  if (f_embed < 2 || f_embed % 2 != 0) throw ConfigError("model: f_embed must be even and >= 2");
  if (f_infer * 2 != f_embed) {
    throw ConfigError("model: f_infer must be exactly f_embed / 2 (got " + std::to_string(f_infer) +
                      " for f_embed " + std::to_string(f_embed) + ")");
  }
  if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("model: kernel_size must be odd");
  if (scale < 1) throw ConfigError("model: scale must be >= 1");
}

template <typename T>
std::size_t ParameterSet<T>::scalar_count() const {
  std::size_t total = 0;
  for (const auto& e : entries) total += e.params.weights.size() + e.params.bias.size();
  return total;
}

template <typename T>
ParameterGradients<T> zero_gradients(const ParameterSet<T>& params) {
  ParameterGradients<T> g;
  for (std::size_t i = 0; i < kParamCount; ++i) {
    g[i].weights = Tensor4<T>(params.entries[i].params.weights.shape());
    g[i].bias.assign(params.entries[i].params.bias.size(), T(0));
  }
  return g;
}

template <typename T>
void accumulate(ParameterGradients<T>& into, const ParameterGradients<T>& from) {
  for (std::size_t i = 0; i < kParamCount; ++i) {
    add_inplace(into[i].weights, from[i].weights);
    if (into[i].bias.size() != from[i].bias.size()) throw ConfigError("accumulate: bias mismatch");
    for (std::size_t j = 0; j < into[i].bias.size(); ++j) into[i].bias[j] += from[i].bias[j];
  }
}

template <typename T>
Model<T> build_model(const ModelConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  const std::size_t k = cfg.kernel_size;
  Model<T> model;
  model.config = cfg;

  const std::array<ConvParams<T>, kParamCount> shapes = {
      ConvParams<T>(cfg.f_embed, 1, k),
      ConvParams<T>(cfg.f_embed, cfg.f_embed, k),
      ConvParams<T>(cfg.f_infer, cfg.f_embed, 1),
      ConvParams<T>(cfg.f_infer, cfg.f_infer, k),
      ConvParams<T>(cfg.f_embed, cfg.f_infer, 1),
      ConvParams<T>(1, cfg.f_embed, k),
      ConvParams<T>(1, cfg.recurrences, 1, /*with_bias=*/false),
  };

  Rng rng(seed);
  for (std::size_t i = 0; i < kParamCount; ++i) {
    const auto id = static_cast<ParamId>(i);
    auto& entry = model.params.entries[i];
    entry.name = kParamNames[i];
    entry.decay_exempt = is_decay_exempt(id);
    entry.params = shapes[i];
    auto& w = entry.params.weights;

    if (id == ParamId::InetRecursive) {
      const std::size_t center = (k - 1) / 2;
      for (std::size_t c = 0; c < cfg.f_infer; ++c) w(c, c, center, center) = T(1);
    } else if (id == ParamId::RnetMerge) {
      w.fill(T(1) / static_cast<T>(cfg.recurrences));
    } else {
      const double fan_in = static_cast<double>(w.c() * w.h() * w.w());
      const double stddev = std::sqrt(2.0 / fan_in);
      for (std::size_t j = 0; j < w.size(); ++j) w[j] = static_cast<T>(stddev * rng.normal());
    }
  }
  return model;
}

template <typename T>
Tensor4<T> stack_channels(const std::vector<Tensor4<T>>& images) {
  if (images.empty()) throw ConfigError("stack_channels: no images");
  const Shape4 s = images.front().shape();
  if (s.c != 1) throw ConfigError("stack_channels: images must have one channel");
  Tensor4<T> out(s.n, images.size(), s.h, s.w);
  for (std::size_t r = 0; r < images.size(); ++r) {
    require_same_shape(images[r].shape(), s, "stack_channels");
    for (std::size_t n = 0; n < s.n; ++n) {
      const auto src = images[r].channel(n, 0);
      std::copy(src.begin(), src.end(), out.channel(n, r).begin());
    }
  }
  return out;
}

namespace {

template <typename T>
void check_input(const Model<T>& model, const Tensor4<T>& input) {
  if (input.c() != 1) {
    throw ConfigError("model input must have 1 channel, got " + std::to_string(input.c()));
  }
  (void)model;
}

template <typename T>
void relu_inplace(Tensor4<T>& x) {
  for (std::size_t i = 0; i < x.size(); ++i) x[i] = x[i] > T(0) ? x[i] : T(0);
}

// Slice channel r of a (n, R, h, w) tensor into (n, 1, h, w).
template <typename T>
Tensor4<T> channel_slice(const Tensor4<T>& stacked, std::size_t r) {
  Tensor4<T> out(stacked.n(), 1, stacked.h(), stacked.w());
  for (std::size_t n = 0; n < stacked.n(); ++n) {
    const auto src = stacked.channel(n, r);
    std::copy(src.begin(), src.end(), out.channel(n, 0).begin());
  }
  return out;
}

}  // namespace

template <typename T>
ForwardTrace<T> forward(const Model<T>& model, const Tensor4<T>& input) {
  check_input(model, input);
  const auto& p = model.params;
  const std::size_t R = model.config.recurrences;

  ForwardTrace<T> t;
  t.input = input;
  t.z_conv1 = conv2d_forward(input, p[ParamId::EnetConv1]);
  t.a_conv1 = relu_forward(t.z_conv1);
  t.z_conv2 = conv2d_forward(t.a_conv1, p[ParamId::EnetConv2]);
  t.a_conv2 = relu_forward(t.z_conv2);
  t.z_shrink = conv2d_forward(t.a_conv2, p[ParamId::EnetShrink]);
  t.hidden.reserve(R + 1);
  t.hidden.push_back(relu_forward(t.z_shrink));

  for (std::size_t r = 1; r <= R; ++r) {
    const Tensor4<T>& prev = t.hidden.back();
    t.z_recur.push_back(conv2d_forward(prev, p[ParamId::InetRecursive]));
    t.hidden.push_back(add(prev, relu_forward(t.z_recur.back())));

    t.z_expand.push_back(conv2d_forward(t.hidden.back(), p[ParamId::RnetExpand]));
    t.expanded.push_back(relu_forward(t.z_expand.back()));
    t.intermediate_images.push_back(conv2d_forward(t.expanded.back(), p[ParamId::RnetToImage]));
  }

  t.stacked = stack_channels(t.intermediate_images);
  t.final_image = conv2d_forward(t.stacked, p[ParamId::RnetMerge]);
  return t;
}

template <typename T>
Tensor4<T> infer(const Model<T>& model, const Tensor4<T>& input) {
  check_input(model, input);
  const auto& p = model.params;
  const std::size_t R = model.config.recurrences;

  Tensor4<T> h;
  {
    Tensor4<T> a = conv2d_forward(input, p[ParamId::EnetConv1]);
    relu_inplace(a);
    a = conv2d_forward(a, p[ParamId::EnetConv2]);
    relu_inplace(a);
    h = conv2d_forward(a, p[ParamId::EnetShrink]);
    relu_inplace(h);
  }

  const auto& merge = p[ParamId::RnetMerge].weights;
  Tensor4<T> out(input.n(), 1, input.h(), input.w());
  for (std::size_t r = 0; r < R; ++r) {
    Tensor4<T> branch = conv2d_forward(h, p[ParamId::InetRecursive]);
    relu_inplace(branch);
    add_inplace(h, branch);

    Tensor4<T> e = conv2d_forward(h, p[ParamId::RnetExpand]);
    relu_inplace(e);
    const Tensor4<T> y = conv2d_forward(e, p[ParamId::RnetToImage]);
    const T w = merge[r];
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += w * y[i];
  }
  return out;
}

template <typename T>
ParameterGradients<T> backward(const Model<T>& model, const ForwardTrace<T>& trace,
                               const Tensor4<T>& grad_final,
                               const std::vector<Tensor4<T>>& grads_intermediate) {
  const auto& p = model.params;
  const std::size_t R = model.config.recurrences;
  if (grads_intermediate.size() != R) {
    throw ConfigError("backward: expected " + std::to_string(R) + " intermediate gradients, got " +
                      std::to_string(grads_intermediate.size()));
  }
  if (trace.intermediate_images.size() != R || trace.hidden.size() != R + 1) {
    throw ConfigError("backward: trace does not match model recurrences");
  }
  require_same_shape(grad_final.shape(), trace.final_image.shape(), "backward grad_final");
  for (std::size_t r = 0; r < R; ++r) {
    require_same_shape(grads_intermediate[r].shape(), trace.intermediate_images[r].shape(),
                       "backward grads_intermediate");
  }

  ParameterGradients<T> g = zero_gradients(p);
  auto take = [&g](ParamId id, ConvGradients<T>& cg) {
    auto& slot = g[index_of(id)];
    add_inplace(slot.weights, cg.weights);
    for (std::size_t j = 0; j < slot.bias.size(); ++j) slot.bias[j] += cg.bias[j];
  };

  ConvGradients<T> merge = conv2d_backward(trace.stacked, p[ParamId::RnetMerge], grad_final);
  take(ParamId::RnetMerge, merge);

  // Walk the recurrence backwards; grad_h carries d/dh_r from h_{r+1}.
  Tensor4<T> grad_h(trace.hidden.back().shape());
  for (std::size_t r = R; r >= 1; --r) {
    Tensor4<T> grad_y = channel_slice(merge.input, r - 1);
    add_inplace(grad_y, grads_intermediate[r - 1]);

    ConvGradients<T> to_image =
        conv2d_backward(trace.expanded[r - 1], p[ParamId::RnetToImage], grad_y);
    take(ParamId::RnetToImage, to_image);
    const Tensor4<T> grad_ze = relu_backward(trace.z_expand[r - 1], to_image.input);
    ConvGradients<T> expand = conv2d_backward(trace.hidden[r], p[ParamId::RnetExpand], grad_ze);
    take(ParamId::RnetExpand, expand);
    add_inplace(grad_h, expand.input);

    // h_r = h_{r-1} + ReLU(conv(h_{r-1}))
    const Tensor4<T> grad_zr = relu_backward(trace.z_recur[r - 1], grad_h);
    ConvGradients<T> recur =
        conv2d_backward(trace.hidden[r - 1], p[ParamId::InetRecursive], grad_zr);
    take(ParamId::InetRecursive, recur);
    add_inplace(grad_h, recur.input);
  }

  Tensor4<T> grad = relu_backward(trace.z_shrink, grad_h);
  ConvGradients<T> shrink = conv2d_backward(trace.a_conv2, p[ParamId::EnetShrink], grad);
  take(ParamId::EnetShrink, shrink);
  grad = relu_backward(trace.z_conv2, shrink.input);
  ConvGradients<T> conv2 = conv2d_backward(trace.a_conv1, p[ParamId::EnetConv2], grad);
  take(ParamId::EnetConv2, conv2);
  grad = relu_backward(trace.z_conv1, conv2.input);
  ConvGradients<T> conv1 = conv2d_backward(trace.input, p[ParamId::EnetConv1], grad);
  take(ParamId::EnetConv1, conv1);
  return g;
}

#define WARSHIP_INSTANTIATE_MODEL(T)                                                           \
  template struct ParameterSet<T>;                                                             \
  template ParameterGradients<T> zero_gradients(const ParameterSet<T>&);                       \
  template void accumulate(ParameterGradients<T>&, const ParameterGradients<T>&);              \
  template Model<T> build_model(const ModelConfig&, std::uint64_t);                            \
  template Tensor4<T> stack_channels(const std::vector<Tensor4<T>>&);                          \
  template ForwardTrace<T> forward(const Model<T>&, const Tensor4<T>&);                        \
  template Tensor4<T> infer(const Model<T>&, const Tensor4<T>&);                               \
  template ParameterGradients<T> backward(const Model<T>&, const ForwardTrace<T>&,             \
                                          const Tensor4<T>&, const std::vector<Tensor4<T>>&);

WARSHIP_INSTANTIATE_MODEL(float)
WARSHIP_INSTANTIATE_MODEL(double)

#undef WARSHIP_INSTANTIATE_MODEL

}  // namespace warship
