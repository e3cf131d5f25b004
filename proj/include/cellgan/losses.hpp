#pragma once

#include <functional>
#include <string>

#include "cellgan/nn.hpp"
#include "cellgan/rng.hpp"

namespace cellgan::gan {

using ad::TensorT;
using ad::Var;

// Networks enter the losses as callables so the loss algebra can be tested
// against closed-form critics (e.g. D(x) = w.x) as well as the real resnets.
template <typename S>
using DiscFn = std::function<Var(nn::BindingT<S>&, Var)>;  // images -> [N] scores
template <typename S>
using GenFn = std::function<Var(nn::BindingT<S>&, Var)>;  // noise [N,K+dz] -> images
template <typename S>
using PosteriorFn = std::function<Var(nn::BindingT<S>&, Var)>;  // images -> [N,K]

struct LossReport {
  double L_D = 0;
  double L_G = 0;
  double L_Q = 0;
  double wasserstein_estimate = 0;  // mean D(real) - mean D(fake)
  double penalty_mean = 0;          // lambda1-scaled penalty term of L_D
  double grad_norm_mean = 0;        // mean per-sample ||grad_xhat D(xhat)||
};

std::string loss_csv_header();
std::string loss_csv_row(int64_t iter, const LossReport& r);

template <typename S>
struct InterpolatedSampleT {
  TensorT<S> epsilon;  // [N], one uniform draw per sample
  Var x_hat;           // leaf on the segment between real and fake
};

template <typename S>
struct PenaltyResultT {
  Var penalty;  // scalar, lambda1 * mean((||grad||_p - 1)^2)
  Var norms;    // [N] per-sample gradient norms
  InterpolatedSampleT<S> interp;
};

// WGAN-GP penalty on straight-line interpolates between real and fake batches.
// epsilon_override (one value per sample) replaces the uniform draws; used to
// pin the interpolation endpoints in tests.
template <typename S>
PenaltyResultT<S> gradient_penalty(nn::BindingT<S>& bind, const DiscFn<S>& D,
                                   const TensorT<S>& x_real, const TensorT<S>& x_fake,
                                   double lambda1, double p, Rng& rng,
                                   const std::vector<double>* epsilon_override = nullptr);

template <typename S>
struct DiscLossT {
  Var loss;
  double wasserstein_estimate = 0;
  double penalty_mean = 0;
  double grad_norm_mean = 0;
};

// mean D(G(z,c)) - mean D(x) + penalty. The generator is evaluated with frozen
// parameters; gradients reach only what the caller bound (the discriminator).
template <typename S>
DiscLossT<S> discriminator_loss(nn::BindingT<S>& bind, const DiscFn<S>& D, const GenFn<S>& G,
                                const TensorT<S>& batch_real,
                                const nn::NoiseBatchT<S>& noise, double lambda1, double p,
                                Rng& rng);

// -mean D(G(z,c)); bind G's parameters, leave D frozen.
template <typename S>
Var generator_loss(nn::BindingT<S>& bind, const DiscFn<S>& D, const GenFn<S>& G,
                   const nn::NoiseBatchT<S>& noise);

// lambda2 * mean -log Q(c_true | G(z,c)), posterior clamped at 1e-12 before
// the log. Bind G and Q-head parameters for the joint step.
template <typename S>
Var auxiliary_loss(nn::BindingT<S>& bind, const PosteriorFn<S>& Q, const GenFn<S>& G,
                   const nn::NoiseBatchT<S>& noise, double lambda2);

// mean log Q(c|G(z,c)) + ln K; equals ln K - L_Q / lambda2 on the same batch.
template <typename S>
Var mutual_information_lower_bound(nn::BindingT<S>& bind, const PosteriorFn<S>& Q,
                                   const GenFn<S>& G, const nn::NoiseBatchT<S>& noise, int K);

}  // namespace cellgan::gan
