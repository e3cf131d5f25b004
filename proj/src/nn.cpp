#include "cellgan/nn.hpp"

#include <cmath>

namespace cellgan::nn {

using namespace cellgan::ad;

void validate_spec(const NetworkSpec& spec) {
  if (spec.K < 2) throw ConfigError("network spec: K must be >= 2");
  if (spec.dim_z < 1) throw ConfigError("network spec: dim_z must be >= 1");
  if (spec.blocks.empty()) throw ConfigError("network spec: no residual blocks");

  int hw;
  int channels;
  if (spec.role == NetRole::generator) {
    int ups = 0;
    for (const auto& b : spec.blocks)
      if (b.kind == BlockKind::upsample) ++ups;
    hw = spec.image_hw >> ups;
    if (hw << ups != spec.image_hw || hw < 1)
      throw ConfigError(strfmt("network spec: %d upsample blocks cannot reach %dx%d output",
                               ups, spec.image_hw, spec.image_hw));
    channels = spec.blocks.front().in_channels;
  } else {
    hw = spec.image_hw;
    channels = spec.image_channels;
    if (spec.blocks.front().in_channels != channels)
      throw ConfigError(strfmt("network spec: block 0 expects %d input channels, image has %d",
                               spec.blocks.front().in_channels, channels));
  }

  for (size_t i = 0; i < spec.blocks.size(); ++i) {
    const auto& b = spec.blocks[i];
    if (b.in_channels <= 0 || b.out_channels <= 0)
      throw ConfigError(strfmt("network spec: block %zu has non-positive channels", i));
    if (b.in_channels != channels)
      throw ConfigError(strfmt("network spec: block %zu expects %d input channels, gets %d", i,
                               b.in_channels, channels));
    channels = b.out_channels;
    if (b.kind == BlockKind::upsample) hw *= 2;
    if (b.kind == BlockKind::downsample) {
      if (hw % 2 != 0)
        throw ConfigError(strfmt("network spec: block %zu downsamples odd extent %d", i, hw));
      hw /= 2;
    }
    if (hw < 1) throw ConfigError(strfmt("network spec: block %zu collapses spatial extent", i));
  }
  if (spec.role == NetRole::generator && hw != spec.image_hw)
    throw ConfigError("network spec: generator blocks do not reach the image size");
}

// ---- init helpers -----------------------------------------------------------

namespace {

template <typename S>
TensorT<S> he_normal(const Shape& shape, int fan_in, Rng& rng) {
  TensorT<S> t = TensorT<S>::zeros(shape);
  const double stddev = std::sqrt(2.0 / (double)fan_in);
  for (auto& x : t.v) x = (S)(stddev * rng.normal());
  return t;
}

}  // namespace

// ---- dense -------------------------------------------------------------------

template <typename S>
void DenseT<S>::init(int in, int out, Rng& rng) {
  W = he_normal<S>({in, out}, in, rng);
  b = TensorT<S>::zeros({out});
}

template <typename S>
Var DenseT<S>::forward(BindingT<S>& bind, Var x) const {
  auto& t = bind.tape();
  const int n = t.val(x).dim(0);
  return add(t, matmul(t, x, bind(W)), bcast_rows(t, bind(b), n));
}

template <typename S>
void DenseT<S>::visit(const std::string& prefix, ParamList<S>& out) {
  out.push_back({prefix + ".W", &W, true});
  out.push_back({prefix + ".b", &b, true});
}

// ---- conv --------------------------------------------------------------------

template <typename S>
void Conv2dT<S>::init(int in, int out, int k, int pad_, Rng& rng) {
  W = he_normal<S>({out, in, k, k}, in * k * k, rng);
  b = TensorT<S>::zeros({out});
  pad = pad_;
}

template <typename S>
Var Conv2dT<S>::forward(BindingT<S>& bind, Var x) const {
  auto& t = bind.tape();
  Var y = conv2d(t, x, bind(W), pad);
  const auto& s = t.val(y).shape;
  return add(t, y, bcast_channel(t, bind(b), s[0], s[2], s[3]));
}

template <typename S>
void Conv2dT<S>::visit(const std::string& prefix, ParamList<S>& out) {
  out.push_back({prefix + ".W", &W, true});
  out.push_back({prefix + ".b", &b, true});
}

// ---- batchnorm ----------------------------------------------------------------

template <typename S>
void BatchNormT<S>::init(int channels) {
  gamma = TensorT<S>::full({channels}, S(1));
  beta = TensorT<S>::zeros({channels});
  running_mean = TensorT<S>::zeros({channels});
  running_var = TensorT<S>::full({channels}, S(1));
}

template <typename S>
Var BatchNormT<S>::forward(BindingT<S>& bind, Var x, bool training) {
  auto& t = bind.tape();
  const auto& s = t.val(x).shape;
  const int N = s[0], C = s[1], H = s[2], W_ = s[3];
  const double inv_count = 1.0 / ((double)N * H * W_);

  Var mean, var;
  Var xc;
  if (training) {
    mean = mul_scalar(t, sum_channel(t, x), inv_count);
    xc = sub(t, x, bcast_channel(t, mean, N, H, W_));
    var = mul_scalar(t, sum_channel(t, mul(t, xc, xc)), inv_count);
    const auto& mv = t.val(mean).v;
    const auto& vv = t.val(var).v;
    for (int c = 0; c < C; ++c) {
      running_mean.v[(size_t)c] =
          (S)(momentum * (double)running_mean.v[(size_t)c] + (1 - momentum) * (double)mv[(size_t)c]);
      running_var.v[(size_t)c] =
          (S)(momentum * (double)running_var.v[(size_t)c] + (1 - momentum) * (double)vv[(size_t)c]);
    }
  } else {
    mean = bind(running_mean);
    var = bind(running_var);
    xc = sub(t, x, bcast_channel(t, mean, N, H, W_));
  }
  Var inv_std = pow_scalar(t, add_scalar(t, var, eps), -0.5);
  Var xn = mul(t, xc, bcast_channel(t, inv_std, N, H, W_));
  Var scaled = mul(t, xn, bcast_channel(t, bind(gamma), N, H, W_));
  return add(t, scaled, bcast_channel(t, bind(beta), N, H, W_));
}

template <typename S>
void BatchNormT<S>::visit(const std::string& prefix, ParamList<S>& out) {
  out.push_back({prefix + ".gamma", &gamma, true});
  out.push_back({prefix + ".beta", &beta, true});
  out.push_back({prefix + ".running_mean", &running_mean, false});
  out.push_back({prefix + ".running_var", &running_var, false});
}

// ---- residual block -------------------------------------------------------------

template <typename S>
void ResBlockT<S>::init(const ResBlockSpec& sp, Rng& rng) {
  spec = sp;
  conv1.init(sp.in_channels, sp.out_channels, 3, 1, rng);
  conv2.init(sp.out_channels, sp.out_channels, 3, 1, rng);
  if (sp.in_channels != sp.out_channels) {
    skip.emplace();
    skip->init(sp.in_channels, sp.out_channels, 1, 0, rng);
  }
  if (sp.use_batchnorm) {
    bn1.emplace();
    bn1->init(sp.out_channels);
    bn2.emplace();
    bn2->init(sp.out_channels);
  }
}

template <typename S>
Var ResBlockT<S>::forward(BindingT<S>& bind, Var x, bool training) {
  auto& t = bind.tape();
  Var in = x;
  if (spec.kind == BlockKind::upsample) in = upsample_nn2x(t, x);

  Var r = conv1.forward(bind, in);
  if (bn1) r = bn1->forward(bind, r, training);
  r = relu(t, r);
  r = conv2.forward(bind, r);
  if (bn2) r = bn2->forward(bind, r, training);
  if (spec.kind == BlockKind::downsample) r = avgpool2x(t, r);

  Var s = skip ? skip->forward(bind, in) : in;
  if (spec.kind == BlockKind::downsample) s = avgpool2x(t, s);
  return add(t, r, s);
}

template <typename S>
void ResBlockT<S>::visit(const std::string& prefix, ParamList<S>& out) {
  conv1.visit(prefix + ".conv1", out);
  conv2.visit(prefix + ".conv2", out);
  if (skip) skip->visit(prefix + ".skip", out);
  if (bn1) bn1->visit(prefix + ".bn1", out);
  if (bn2) bn2->visit(prefix + ".bn2", out);
}

// ---- generator --------------------------------------------------------------------

template <typename S>
GeneratorT<S> build_generator(const NetworkSpec& spec, uint64_t init_seed) {
  if (spec.role != NetRole::generator) throw ConfigError("build_generator: wrong role");
  validate_spec(spec);
  GeneratorT<S> g;
  g.spec = spec;
  int ups = 0;
  for (const auto& b : spec.blocks)
    if (b.kind == BlockKind::upsample) ++ups;
  g.seed_hw = spec.image_hw >> ups;

  Rng rng(init_seed);
  const int c0 = spec.blocks.front().in_channels;
  g.stem.init(spec.K + spec.dim_z, c0 * g.seed_hw * g.seed_hw, rng);
  g.blocks.resize(spec.blocks.size());
  for (size_t i = 0; i < spec.blocks.size(); ++i) g.blocks[i].init(spec.blocks[i], rng);
  const int c_last = spec.blocks.back().out_channels;
  if (spec.blocks.back().use_batchnorm) {
    g.out_bn.emplace();
    g.out_bn->init(c_last);
  }
  g.to_rgb.init(c_last, spec.image_channels, 3, 1, rng);
  return g;
}

template <typename S>
Var GeneratorT<S>::forward(BindingT<S>& bind, Var noise, bool training) {
  auto& t = bind.tape();
  const auto& ns = t.val(noise).shape;
  if (ns.size() != 2 || ns[1] != spec.K + spec.dim_z)
    throw ShapeError(strfmt("generator: noise width %d, expected K+dim_z = %d",
                            ns.size() == 2 ? ns[1] : -1, spec.K + spec.dim_z));
  const int n = ns[0];
  const int c0 = spec.blocks.front().in_channels;
  Var x = stem.forward(bind, noise);
  x = reshape(t, x, {n, c0, seed_hw, seed_hw});
  for (auto& b : blocks) x = b.forward(bind, x, training);
  if (out_bn) x = out_bn->forward(bind, x, training);
  x = relu(t, x);
  x = to_rgb.forward(bind, x);
  return tanh(t, x);
}

template <typename S>
void GeneratorT<S>::visit(const std::string& prefix, ParamList<S>& out) {
  stem.visit(prefix + ".stem", out);
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].visit(prefix + ".block" + std::to_string(i), out);
  if (out_bn) out_bn->visit(prefix + ".out_bn", out);
  to_rgb.visit(prefix + ".to_rgb", out);
}

// ---- discriminator ------------------------------------------------------------------

template <typename S>
DiscriminatorT<S> build_discriminator(const NetworkSpec& spec, uint64_t init_seed) {
  if (spec.role != NetRole::discriminator) throw ConfigError("build_discriminator: wrong role");
  validate_spec(spec);
  DiscriminatorT<S> d;
  d.spec = spec;
  Rng rng(init_seed);
  d.blocks.resize(spec.blocks.size());
  for (size_t i = 0; i < spec.blocks.size(); ++i) d.blocks[i].init(spec.blocks[i], rng);
  d.head.init(spec.blocks.back().out_channels, 1, rng);
  return d;
}

template <typename S>
Var DiscriminatorT<S>::trunk(BindingT<S>& bind, Var x, std::vector<Var>* block_acts) {
  auto& t = bind.tape();
  for (auto& b : blocks) {
    x = b.forward(bind, x, false);
    if (block_acts) block_acts->push_back(x);
  }
  x = relu(t, x);
  const auto& s = t.val(x).shape;
  return mul_scalar(t, sum_spatial(t, x), 1.0 / ((double)s[2] * s[3]));
}

template <typename S>
Var DiscriminatorT<S>::forward(BindingT<S>& bind, Var x) {
  auto& t = bind.tape();
  Var pooled = trunk(bind, x);
  Var score = head.forward(bind, pooled);  // [N,1]
  return reshape(t, score, {t.val(score).dim(0)});
}

template <typename S>
void DiscriminatorT<S>::visit(const std::string& prefix, ParamList<S>& out) {
  for (size_t i = 0; i < blocks.size(); ++i)
    blocks[i].visit(prefix + ".block" + std::to_string(i), out);
  head.visit(prefix + ".head", out);
}

// ---- auxiliary head ------------------------------------------------------------------

template <typename S>
AuxHeadT<S> build_aux_head(int trunk_channels, int K, uint64_t init_seed) {
  AuxHeadT<S> q;
  q.K = K;
  Rng rng(init_seed);
  q.head.init(trunk_channels, K, rng);
  return q;
}

template <typename S>
Var AuxHeadT<S>::posterior_from_trunk(BindingT<S>& bind, Var pooled) const {
  return softmax(bind.tape(), head.forward(bind, pooled));
}

template <typename S>
void AuxHeadT<S>::visit(const std::string& prefix, ParamList<S>& out) {
  head.visit(prefix + ".head", out);
}

template <typename S>
int64_t param_count(const ParamList<S>& params) {
  int64_t n = 0;
  for (const auto& p : params) n += p.tensor->size();
  return n;
}

// ---- noise ------------------------------------------------------------------------

template <typename S>
NoiseBatchT<S> sample_noise(int batch, int K, int dim_z, Rng& rng) {
  if (batch < 1 || K < 1 || dim_z < 1)
    throw ConfigError("sample_noise: batch, K and dim_z must be >= 1");
  NoiseBatchT<S> nb;
  nb.K = K;
  nb.dim_z = dim_z;
  nb.input = TensorT<S>::zeros({batch, K + dim_z});
  nb.labels.resize((size_t)batch);
  for (int i = 0; i < batch; ++i) {
    const int c = (int)rng.uniform_int((uint64_t)K);
    nb.labels[(size_t)i] = c;
    S* row = nb.input.data() + (size_t)i * (K + dim_z);
    row[c] = S(1);
    for (int j = 0; j < dim_z; ++j) row[K + j] = (S)rng.normal();
  }
  return nb;
}

template <typename S>
NoiseBatchT<S> make_noise(const std::vector<int>& categories, const std::vector<double>& z,
                          int K, int dim_z) {
  const int batch = (int)categories.size();
  if ((int)z.size() != batch * dim_z)
    throw ShapeError("make_noise: gaussian block size does not match batch");
  NoiseBatchT<S> nb;
  nb.K = K;
  nb.dim_z = dim_z;
  nb.input = TensorT<S>::zeros({batch, K + dim_z});
  nb.labels = categories;
  for (int i = 0; i < batch; ++i) {
    if (categories[(size_t)i] < 0 || categories[(size_t)i] >= K)
      throw ConfigError("make_noise: category out of range");
    S* row = nb.input.data() + (size_t)i * (K + dim_z);
    row[categories[(size_t)i]] = S(1);
    for (int j = 0; j < dim_z; ++j) row[K + j] = (S)z[(size_t)i * dim_z + j];
  }
  return nb;
}

// ---- adam -------------------------------------------------------------------------

template <typename S>
AdamStateT<S> make_adam_state(const std::vector<TensorT<S>*>& params) {
  AdamStateT<S> st;
  st.m.reserve(params.size());
  st.v.reserve(params.size());
  for (auto* p : params) {
    st.m.push_back(TensorT<S>::zeros(p->shape));
    st.v.push_back(TensorT<S>::zeros(p->shape));
  }
  return st;
}

template <typename S>
void adam_step(const std::vector<TensorT<S>*>& params, const std::vector<TensorT<S>>& grads,
               AdamStateT<S>& state, const AdamConfig& cfg) {
  if (params.size() != grads.size() || params.size() != state.m.size())
    throw ShapeError("adam_step: parameter/gradient/state counts differ");
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, (double)state.t);
  const double bc2 = 1.0 - std::pow(cfg.beta2, (double)state.t);
  for (size_t i = 0; i < params.size(); ++i) {
    TensorT<S>& p = *params[i];
    TensorT<S>& m = state.m[i];
    TensorT<S>& v = state.v[i];
    const bool has_grad = !grads[i].v.empty();
    if (has_grad && grads[i].shape != p.shape)
      throw ShapeError("adam_step: gradient shape mismatch for parameter " + std::to_string(i));
    for (size_t j = 0; j < p.v.size(); ++j) {
      const double g = has_grad ? (double)grads[i].v[j] : 0.0;
      const double mj = cfg.beta1 * (double)m.v[j] + (1.0 - cfg.beta1) * g;
      const double vj = cfg.beta2 * (double)v.v[j] + (1.0 - cfg.beta2) * g * g;
      m.v[j] = (S)mj;
      v.v[j] = (S)vj;
      p.v[j] = (S)((double)p.v[j] - cfg.lr * (mj / bc1) / (std::sqrt(vj / bc2) + cfg.epsilon));
    }
  }
}

// ---- instantiation -------------------------------------------------------------------

#define CELLGAN_INSTANTIATE_NN(S)                                                          \
  template struct DenseT<S>;                                                               \
  template struct Conv2dT<S>;                                                              \
  template struct BatchNormT<S>;                                                           \
  template struct ResBlockT<S>;                                                            \
  template struct GeneratorT<S>;                                                           \
  template struct DiscriminatorT<S>;                                                       \
  template struct AuxHeadT<S>;                                                             \
  template GeneratorT<S> build_generator(const NetworkSpec&, uint64_t);                    \
  template DiscriminatorT<S> build_discriminator(const NetworkSpec&, uint64_t);            \
  template AuxHeadT<S> build_aux_head(int, int, uint64_t);                                 \
  template int64_t param_count(const ParamList<S>&);                                       \
  template NoiseBatchT<S> sample_noise(int, int, int, Rng&);                               \
  template NoiseBatchT<S> make_noise(const std::vector<int>&, const std::vector<double>&,  \
                                     int, int);                                            \
  template AdamStateT<S> make_adam_state(const std::vector<TensorT<S>*>&);                 \
  template void adam_step(const std::vector<TensorT<S>*>&, const std::vector<TensorT<S>>&, \
                          AdamStateT<S>&, const AdamConfig&);

CELLGAN_INSTANTIATE_NN(float)
CELLGAN_INSTANTIATE_NN(double)

#undef CELLGAN_INSTANTIATE_NN

}  // namespace cellgan::nn
