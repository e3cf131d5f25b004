#include "cellgan/losses.hpp"

#include <cmath>

namespace cellgan::gan {

using namespace cellgan::ad;

std::string loss_csv_header() {
  return "iter,L_D,L_G,L_Q,wasserstein_estimate,grad_norm_mean,penalty_mean";
}

std::string loss_csv_row(int64_t iter, const LossReport& r) {
  return std::to_string(iter) + "," + fmt_real(r.L_D) + "," + fmt_real(r.L_G) + "," +
         fmt_real(r.L_Q) + "," + fmt_real(r.wasserstein_estimate) + "," +
         fmt_real(r.grad_norm_mean) + "," + fmt_real(r.penalty_mean);
}

template <typename S>
PenaltyResultT<S> gradient_penalty(nn::BindingT<S>& bind, const DiscFn<S>& D,
                                   const TensorT<S>& x_real, const TensorT<S>& x_fake,
                                   double lambda1, double p, Rng& rng,
                                   const std::vector<double>* epsilon_override) {
  if (lambda1 < 0) throw ConfigError("gradient_penalty: lambda1 must be >= 0");
  if (x_real.shape != x_fake.shape)
    throw ShapeError("gradient_penalty: real batch " + shape_str(x_real.shape) +
                     " vs fake batch " + shape_str(x_fake.shape));
  auto& t = bind.tape();
  const int n = x_real.dim(0);
  if (epsilon_override && (int)epsilon_override->size() != n)
    throw ShapeError("gradient_penalty: epsilon override size mismatch");

  PenaltyResultT<S> res;
  res.interp.epsilon = TensorT<S>::zeros({n});
  TensorT<S> xh = x_real;
  const int64_t inner = x_real.size() / n;
  for (int i = 0; i < n; ++i) {
    const S e = epsilon_override ? (S)(*epsilon_override)[(size_t)i] : (S)rng.uniform();
    res.interp.epsilon.v[(size_t)i] = e;
    const S* r = x_real.data() + (size_t)i * inner;
    const S* f = x_fake.data() + (size_t)i * inner;
    S* o = xh.data() + (size_t)i * inner;
    for (int64_t j = 0; j < inner; ++j) o[j] = e * r[j] + (S(1) - e) * f[j];
  }
  res.interp.x_hat = t.leaf(std::move(xh), true);

  Var d_hat = D(bind, res.interp.x_hat);
  res.norms = grad_norm(t, d_hat, res.interp.x_hat, p);
  Var excess = add_scalar(t, res.norms, -1.0);
  res.penalty = mul_scalar(t, mean_all(t, mul(t, excess, excess)), lambda1);
  return res;
}

template <typename S>
DiscLossT<S> discriminator_loss(nn::BindingT<S>& bind, const DiscFn<S>& D, const GenFn<S>& G,
                                const TensorT<S>& batch_real,
                                const nn::NoiseBatchT<S>& noise, double lambda1, double p,
                                Rng& rng) {
  auto& t = bind.tape();
  if (batch_real.rank() < 1 || batch_real.dim(0) < 1)
    throw DataError("discriminator_loss: empty real batch");
  if (noise.input.dim(0) != batch_real.dim(0))
    throw ShapeError(strfmt("discriminator_loss: %d noise rows for %d real samples",
                            noise.input.dim(0), batch_real.dim(0)));

  // fakes detached from the generator: the D step treats G as a constant
  Var fake_raw = G(bind, bind(noise.input));
  Var fake = t.constant(t.val(fake_raw));
  Var real = bind(batch_real);

  Var d_fake = D(bind, fake);
  Var d_real = D(bind, real);
  auto pen = gradient_penalty(bind, D, batch_real, t.val(fake), lambda1, p, rng);

  Var loss = add(t, sub(t, mean_all(t, d_fake), mean_all(t, d_real)), pen.penalty);

  DiscLossT<S> out;
  out.loss = loss;
  out.wasserstein_estimate = (double)t.val(mean_all(t, d_real)).item() -
                             (double)t.val(mean_all(t, d_fake)).item();
  out.penalty_mean = (double)t.val(pen.penalty).item();
  out.grad_norm_mean = (double)t.val(mean_all(t, pen.norms)).item();
  return out;
}

template <typename S>
Var generator_loss(nn::BindingT<S>& bind, const DiscFn<S>& D, const GenFn<S>& G,
                   const nn::NoiseBatchT<S>& noise) {
  auto& t = bind.tape();
  Var fake = G(bind, bind(noise.input));
  return mul_scalar(t, mean_all(t, D(bind, fake)), -1.0);
}

namespace {

// mean over the batch of log Q(c_true|G(z,c)), with the documented 1e-12
// posterior floor.
template <typename S>
Var mean_log_true_posterior(nn::BindingT<S>& bind, const PosteriorFn<S>& Q, const GenFn<S>& G,
                            const nn::NoiseBatchT<S>& noise) {
  auto& t = bind.tape();
  Var fake = G(bind, bind(noise.input));
  Var posterior = Q(bind, fake);
  const auto& ps = t.val(posterior).shape;
  if (ps.size() != 2) throw ShapeError("auxiliary loss: posterior must be [N,K]");
  const int n = ps[0], k = ps[1];
  TensorT<S> onehot = TensorT<S>::zeros({n, k});
  for (int i = 0; i < n; ++i) {
    const int c = noise.labels[(size_t)i];
    if (c < 0 || c >= k) throw ShapeError("auxiliary loss: noise category outside posterior K");
    onehot.v[(size_t)i * k + c] = S(1);
  }
  Var picked = sum_per_sample(t, mul(t, posterior, t.constant(onehot)));
  return mean_all(t, log(t, clamp_min(t, picked, 1e-12)));
}

}  // namespace

template <typename S>
Var auxiliary_loss(nn::BindingT<S>& bind, const PosteriorFn<S>& Q, const GenFn<S>& G,
                   const nn::NoiseBatchT<S>& noise, double lambda2) {
  auto& t = bind.tape();
  Var mean_log = mean_log_true_posterior(bind, Q, G, noise);
  return mul_scalar(t, mean_log, -lambda2);
}

template <typename S>
Var mutual_information_lower_bound(nn::BindingT<S>& bind, const PosteriorFn<S>& Q,
                                   const GenFn<S>& G, const nn::NoiseBatchT<S>& noise, int K) {
  auto& t = bind.tape();
  Var mean_log = mean_log_true_posterior(bind, Q, G, noise);
  return add_scalar(t, mean_log, std::log((double)K));
}

#define CELLGAN_INSTANTIATE_LOSSES(S)                                                      \
  template PenaltyResultT<S> gradient_penalty(nn::BindingT<S>&, const DiscFn<S>&,          \
                                              const TensorT<S>&, const TensorT<S>&,       \
                                              double, double, Rng&);                       \
  template DiscLossT<S> discriminator_loss(nn::BindingT<S>&, const DiscFn<S>&,            \
                                           const GenFn<S>&, const TensorT<S>&,            \
                                           const nn::NoiseBatchT<S>&, double, double,     \
                                           Rng&);                                          \
  template Var generator_loss(nn::BindingT<S>&, const DiscFn<S>&, const GenFn<S>&,        \
                              const nn::NoiseBatchT<S>&);                                  \
  template Var auxiliary_loss(nn::BindingT<S>&, const PosteriorFn<S>&, const GenFn<S>&,   \
                              const nn::NoiseBatchT<S>&, double);                          \
  template Var mutual_information_lower_bound(nn::BindingT<S>&, const PosteriorFn<S>&,    \
                                              const GenFn<S>&, const nn::NoiseBatchT<S>&, \
                                              int);

CELLGAN_INSTANTIATE_LOSSES(float)
CELLGAN_INSTANTIATE_LOSSES(double)

#undef CELLGAN_INSTANTIATE_LOSSES

}  // namespace cellgan::gan
