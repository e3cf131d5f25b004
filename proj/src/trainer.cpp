#include "cellgan/trainer.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>

#include "cellgan/checkpoint.hpp"

namespace cellgan::data {

TrainSet to_train_set(const std::vector<seg::CellInstance>& instances) {
  TrainSet set;
  set.count = (int64_t)instances.size();
  set.rows.resize((size_t)set.count * set.row_size());
  set.class_labels.reserve(instances.size());
  for (size_t i = 0; i < instances.size(); ++i) {
    const auto& im = instances[i].image;
    if (im.width != 32 || im.height != 32)
      throw DataError("train set: instances must be 32x32");
    float* row = set.rows.data() + (size_t)i * set.row_size();
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < 32; ++y)
        for (int x = 0; x < 32; ++x)
          row[(c * 32 + y) * 32 + x] = (float)im.at(x, y, c) / 127.5f - 1.0f;
    set.class_labels.push_back(instances[i].class_label);
  }
  return set;
}

template <typename S>
ad::TensorT<S> instance_to_tensor(const seg::CellInstance& instance) {
  const auto& im = instance.image;
  if (im.width != 32 || im.height != 32) throw DataError("instance tensor: image must be 32x32");
  ad::TensorT<S> t = ad::TensorT<S>::zeros({1, 3, 32, 32});
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 32; ++y)
      for (int x = 0; x < 32; ++x)
        t.v[(size_t)(c * 32 + y) * 32 + x] = (S)im.at(x, y, c) / (S)127.5 - (S)1;
  return t;
}

template <typename S>
ad::TensorT<S> make_batch(const TrainSet& set, const std::vector<uint32_t>& indices) {
  const int64_t rs = set.row_size();
  ad::TensorT<S> t = ad::TensorT<S>::zeros({(int)indices.size(), set.channels, set.hw, set.hw});
  for (size_t i = 0; i < indices.size(); ++i) {
    const float* src = set.rows.data() + (size_t)indices[i] * rs;
    S* dst = t.data() + (size_t)i * rs;
    for (int64_t j = 0; j < rs; ++j) dst[j] = (S)src[j];
  }
  return t;
}

template ad::TensorT<float> instance_to_tensor(const seg::CellInstance&);
template ad::TensorT<double> instance_to_tensor(const seg::CellInstance&);
template ad::TensorT<float> make_batch(const TrainSet&, const std::vector<uint32_t>&);
template ad::TensorT<double> make_batch(const TrainSet&, const std::vector<uint32_t>&);

}  // namespace cellgan::data

namespace cellgan::trainer {

using gan::LossReport;
using nn::BindingT;
using nn::ParamList;

void TrainingConfig::validate() const {
  if (batch_size < 2) throw ConfigError("training: batch_size must be >= 2");
  if (d_steps < 1) throw ConfigError("training: d_steps must be >= 1");
  if (K < 2) throw ConfigError("training: K must be >= 2");
  if (dim_z < 1) throw ConfigError("training: dim_z must be >= 1");
  if (epochs < 1) throw ConfigError("training: epochs must be >= 1");
  if (lambda1 < 0) throw ConfigError("training: lambda1 must be >= 0");
  if (g_widths.size() < 2) throw ConfigError("training: g_widths needs seed and output widths");
  if (d_widths.empty()) throw ConfigError("training: d_widths must not be empty");
}

nn::NetworkSpec generator_spec(const TrainingConfig& cfg) {
  nn::NetworkSpec spec;
  spec.role = nn::NetRole::generator;
  spec.K = cfg.K;
  spec.dim_z = cfg.dim_z;
  for (size_t i = 0; i + 1 < cfg.g_widths.size(); ++i)
    spec.blocks.push_back({nn::BlockKind::upsample, cfg.g_widths[i], cfg.g_widths[i + 1], true});
  return spec;
}

nn::NetworkSpec discriminator_spec(const TrainingConfig& cfg) {
  nn::NetworkSpec spec;
  spec.role = nn::NetRole::discriminator;
  spec.K = cfg.K;
  spec.dim_z = cfg.dim_z;
  int in = spec.image_channels;
  for (int w : cfg.d_widths) {
    spec.blocks.push_back({nn::BlockKind::downsample, in, w, false});
    in = w;
  }
  return spec;
}

TrainingRunState init_training(const TrainingConfig& cfg) {
  cfg.validate();
  TrainingRunState st;
  st.cfg = cfg;
  Rng seeder(cfg.seed);
  st.G = nn::build_generator<Real>(generator_spec(cfg), seeder.next_u64());
  st.D = nn::build_discriminator<Real>(discriminator_spec(cfg), seeder.next_u64());
  st.Q = nn::build_aux_head<Real>(cfg.d_widths.back(), cfg.K, seeder.next_u64());
  st.rng = seeder.fork(17);

  auto trainable = [](ParamList<Real>& pl) {
    std::vector<Tensor*> out;
    for (auto& p : pl)
      if (p.trainable) out.push_back(p.tensor);
    return out;
  };
  ParamList<Real> pg, pd, pq;
  st.G.visit("g", pg);
  st.D.visit("d", pd);
  st.Q.visit("q", pq);
  auto tg = trainable(pg), td = trainable(pd), tq = trainable(pq);
  st.adam_g = nn::make_adam_state<Real>(tg);
  st.adam_d = nn::make_adam_state<Real>(td);
  st.adam_q = nn::make_adam_state<Real>(tq);
  return st;
}

// ---- sampler -----------------------------------------------------------------

BatchSampler::BatchSampler(size_t n, uint64_t seed, int64_t round, int64_t pos)
    : n_(n), seed_(seed), round_(round), pos_(pos) {
  if (!n_) throw DataError("sampler: empty dataset");
  regenerate();
}

void BatchSampler::regenerate() {
  perm_.resize(n_);
  for (size_t i = 0; i < n_; ++i) perm_[i] = (uint32_t)i;
  Rng r(seed_ ^ (0xABCD1234u + (uint64_t)round_ * 0x9e3779b97f4a7c15ull));
  r.shuffle(perm_);
}

std::vector<uint32_t> BatchSampler::next(int batch) {
  std::vector<uint32_t> out;
  out.reserve((size_t)batch);
  while ((int)out.size() < batch) {
    if (pos_ >= (int64_t)n_) {
      ++round_;
      pos_ = 0;
      regenerate();
    }
    out.push_back(perm_[(size_t)pos_++]);
  }
  return out;
}

// ---- augmentation -------------------------------------------------------------

std::vector<seg::CellInstance> augment_rotations(const std::vector<seg::CellInstance>& dataset) {
  std::vector<seg::CellInstance> out;
  out.reserve(dataset.size() * 4);
  for (const auto& inst : dataset) {
    if (inst.image.width != inst.image.height)
      throw DataError("augment: instance images must be square");
    out.push_back(inst);
  }
  for (int rot = 1; rot <= 3; ++rot) {
    for (const auto& inst : dataset) {
      seg::CellInstance copy = inst;
      copy.image = img::rotate90(inst.image, rot);
      copy.rotation_deg = rot * 90;
      out.push_back(std::move(copy));
    }
  }
  return out;
}

// ---- iteration -----------------------------------------------------------------

namespace {

// Gradients for the given params in their visit order; unbound or unreached
// params get an empty tensor (moments still decay).
std::vector<Tensor> gather_grads(const std::vector<Tensor*>& params, BindingT<Real>& bind,
                                 const ad::GradMap<Real>& grads) {
  std::vector<Tensor> out(params.size());
  for (size_t i = 0; i < params.size(); ++i) {
    if (!bind.is_bound(*params[i])) continue;
    auto it = grads.find(bind.var_of(*params[i]).id);
    if (it != grads.end()) out[i] = it->second;
  }
  return out;
}

std::vector<Tensor*> trainable_of(ParamList<Real>& pl) {
  std::vector<Tensor*> out;
  for (auto& p : pl)
    if (p.trainable) out.push_back(p.tensor);
  return out;
}

void check_state_finite(const TrainingRunState& st, const LossReport& rep) {
  if (!std::isfinite(rep.L_D) || !std::isfinite(rep.L_G) || !std::isfinite(rep.L_Q))
    throw NumericError(strfmt("training: non-finite loss at iteration %lld",
                              (long long)st.iteration));
  auto check = [&](const nn::ParamList<Real>& pl) {
    for (const auto& p : pl)
      if (!p.tensor->all_finite())
        throw NumericError(strfmt("training: parameter %s became non-finite at iteration %lld",
                                  p.name.c_str(), (long long)st.iteration));
  };
  nn::ParamList<Real> pg, pd, pq;
  const_cast<TrainingRunState&>(st).G.visit("g", pg);
  const_cast<TrainingRunState&>(st).D.visit("d", pd);
  const_cast<TrainingRunState&>(st).Q.visit("q", pq);
  check(pg);
  check(pd);
  check(pq);
}

}  // namespace

gan::LossReport train_iteration(TrainingRunState& state, BatchSampler& sampler,
                                const data::TrainSet& set) {
  const TrainingConfig& cfg = state.cfg;
  if (set.count < 1) throw DataError("train_iteration: empty dataset");

  LossReport rep;

  ParamList<Real> pg, pd, pq;
  state.G.visit("g", pg);
  state.D.visit("d", pd);
  state.Q.visit("q", pq);
  auto tg = trainable_of(pg), td = trainable_of(pd), tq = trainable_of(pq);

  // --- d_steps discriminator updates
  for (int s = 0; s < cfg.d_steps; ++s) {
    auto idx = sampler.next(cfg.batch_size);
    Tensor x_real = data::make_batch<Real>(set, idx);
    auto noise = nn::sample_noise<Real>(cfg.batch_size, cfg.K, cfg.dim_z, state.rng);

    ad::TapeT<Real> tape;
    BindingT<Real> bind(tape);
    for (auto* p : td) bind.bind(*p);

    gan::DiscFn<Real> D = [&](BindingT<Real>& b, ad::Var x) { return state.D.forward(b, x); };
    gan::GenFn<Real> G = [&](BindingT<Real>& b, ad::Var z) { return state.G.forward(b, z, true); };

    auto res = gan::discriminator_loss<Real>(bind, D, G, x_real, noise, cfg.lambda1, cfg.p_norm,
                                             state.rng);
    tape.set_differentiable(false);  // second-order graph no longer needed
    auto grads = ad::backward(tape, res.loss);
    nn::adam_step<Real>(td, gather_grads(td, bind, grads), state.adam_d, cfg.adam);
    state.update_log.push_back('D');

    if (s == cfg.d_steps - 1) {
      rep.L_D = (double)tape.val(res.loss).item();
      rep.wasserstein_estimate = res.wasserstein_estimate;
      rep.penalty_mean = res.penalty_mean;
      rep.grad_norm_mean = res.grad_norm_mean;
    }
  }

  // --- one generator update on L_G
  {
    auto noise = nn::sample_noise<Real>(cfg.batch_size, cfg.K, cfg.dim_z, state.rng);
    ad::TapeT<Real> tape;
    tape.set_differentiable(false);
    BindingT<Real> bind(tape);
    for (auto* p : tg) bind.bind(*p);
    gan::DiscFn<Real> D = [&](BindingT<Real>& b, ad::Var x) { return state.D.forward(b, x); };
    gan::GenFn<Real> G = [&](BindingT<Real>& b, ad::Var z) { return state.G.forward(b, z, true); };
    ad::Var lg = gan::generator_loss<Real>(bind, D, G, noise);
    rep.L_G = (double)tape.val(lg).item();
    auto grads = ad::backward(tape, lg);
    nn::adam_step<Real>(tg, gather_grads(tg, bind, grads), state.adam_g, cfg.adam);
    state.update_log.push_back('G');
  }

  // --- one joint G,Q update on L_Q (trunk frozen; G and the Q head move)
  {
    auto noise = nn::sample_noise<Real>(cfg.batch_size, cfg.K, cfg.dim_z, state.rng);
    ad::TapeT<Real> tape;
    tape.set_differentiable(false);
    BindingT<Real> bind(tape);
    for (auto* p : tg) bind.bind(*p);
    for (auto* p : tq) bind.bind(*p);
    gan::GenFn<Real> G = [&](BindingT<Real>& b, ad::Var z) { return state.G.forward(b, z, true); };
    gan::PosteriorFn<Real> Q = [&](BindingT<Real>& b, ad::Var x) {
      return state.Q.posterior_from_trunk(b, state.D.trunk(b, x));
    };
    ad::Var lq = gan::auxiliary_loss<Real>(bind, Q, G, noise, cfg.lambda2);
    rep.L_Q = (double)tape.val(lq).item();
    auto grads = ad::backward(tape, lq);
    nn::adam_step<Real>(tg, gather_grads(tg, bind, grads), state.adam_g, cfg.adam);
    nn::adam_step<Real>(tq, gather_grads(tq, bind, grads), state.adam_q, cfg.adam);
    state.update_log.push_back('Q');
  }

  state.iteration += 1;
  state.sampler_round = sampler.round();
  state.sampler_pos = sampler.pos();
  check_state_finite(state, rep);
  state.history.push_back(rep);
  return rep;
}

// ---- checkpoint ------------------------------------------------------------------

namespace {

void append_net_records(std::vector<ckpt::TensorRecord>& records, ParamList<Real>& pl) {
  for (auto& p : pl) {
    ckpt::TensorRecord r;
    r.name = p.name;
    r.shape = p.tensor->shape;
    r.data.assign(p.tensor->v.begin(), p.tensor->v.end());
    records.push_back(std::move(r));
  }
}

void append_adam_records(std::vector<ckpt::TensorRecord>& records, const std::string& net,
                         const ParamList<Real>& pl, const nn::AdamStateT<Real>& st) {
  size_t k = 0;
  for (const auto& p : pl) {
    if (!p.trainable) continue;
    for (const char* which : {"m", "v"}) {
      const Tensor& t = which[0] == 'm' ? st.m[k] : st.v[k];
      ckpt::TensorRecord r;
      r.name = "__opt__/" + net + "/" + which + "/" + p.name;
      r.shape = t.shape;
      r.data.assign(t.v.begin(), t.v.end());
      records.push_back(std::move(r));
    }
    ++k;
  }
  records.push_back(ckpt::scalar_record("__opt__/" + net + "/t", (double)st.t));
}

void append_widths(std::vector<ckpt::TensorRecord>& records, const std::string& name,
                   const std::vector<int>& widths) {
  ckpt::TensorRecord r;
  r.name = name;
  r.shape = {(int)widths.size()};
  for (int w : widths) r.data.push_back((float)w);
  records.push_back(std::move(r));
}

std::vector<int> read_widths(const std::vector<ckpt::TensorRecord>& records,
                             const std::string& name) {
  const auto* r = ckpt::find_record(records, name);
  if (!r) throw DataError("checkpoint: missing widths record " + name);
  std::vector<int> out;
  for (float f : r->data) out.push_back((int)f);
  return out;
}

}  // namespace

void save_checkpoint(const TrainingRunState& state, const std::string& path) {
  auto& st = const_cast<TrainingRunState&>(state);
  std::vector<ckpt::TensorRecord> records;
  ParamList<Real> pg, pd, pq;
  st.G.visit("g", pg);
  st.D.visit("d", pd);
  st.Q.visit("q", pq);
  append_net_records(records, pg);
  append_net_records(records, pd);
  append_net_records(records, pq);
  append_adam_records(records, "g", pg, st.adam_g);
  append_adam_records(records, "d", pd, st.adam_d);
  append_adam_records(records, "q", pq, st.adam_q);
  records.push_back(ckpt::bytes_record("__rng__/state", st.rng.serialize()));
  records.push_back(ckpt::scalar_record("__sampler__/round", (double)st.sampler_round));
  records.push_back(ckpt::scalar_record("__sampler__/pos", (double)st.sampler_pos));
  records.push_back(ckpt::scalar_record("__meta__/iteration", (double)st.iteration));
  records.push_back(ckpt::scalar_record("__meta__/epoch", (double)st.epoch));
  records.push_back(ckpt::scalar_record("__meta__/K", st.cfg.K));
  records.push_back(ckpt::scalar_record("__meta__/dim_z", st.cfg.dim_z));
  records.push_back(ckpt::scalar_record("__meta__/batch_size", st.cfg.batch_size));
  records.push_back(ckpt::scalar_record("__meta__/d_steps", st.cfg.d_steps));
  records.push_back(ckpt::scalar_record("__meta__/epochs", st.cfg.epochs));
  records.push_back(ckpt::scalar_record("__meta__/lambda1", st.cfg.lambda1));
  records.push_back(ckpt::scalar_record("__meta__/lambda2", st.cfg.lambda2));
  records.push_back(ckpt::scalar_record("__meta__/p_norm", st.cfg.p_norm));
  records.push_back(ckpt::scalar_record("__meta__/augment", st.cfg.augment ? 1 : 0));
  records.push_back(ckpt::scalar_record("__meta__/adam_lr", st.cfg.adam.lr));
  records.push_back(ckpt::scalar_record("__meta__/adam_beta1", st.cfg.adam.beta1));
  records.push_back(ckpt::scalar_record("__meta__/adam_beta2", st.cfg.adam.beta2));
  records.push_back(ckpt::scalar_record("__meta__/adam_eps", st.cfg.adam.epsilon));
  records.push_back(ckpt::bytes_record("__meta__/seed", std::to_string(st.cfg.seed)));
  append_widths(records, "__meta__/g_widths", st.cfg.g_widths);
  append_widths(records, "__meta__/d_widths", st.cfg.d_widths);
  ckpt::write_checkpoint(path, records);
}

TrainingRunState load_checkpoint(const std::string& path) {
  auto records = ckpt::read_checkpoint(path);

  TrainingConfig cfg;
  cfg.K = (int)ckpt::get_scalar(records, "__meta__/K");
  cfg.dim_z = (int)ckpt::get_scalar(records, "__meta__/dim_z");
  cfg.batch_size = (int)ckpt::get_scalar(records, "__meta__/batch_size");
  cfg.d_steps = (int)ckpt::get_scalar(records, "__meta__/d_steps");
  cfg.epochs = (int)ckpt::get_scalar(records, "__meta__/epochs");
  cfg.lambda1 = ckpt::get_scalar(records, "__meta__/lambda1");
  cfg.lambda2 = ckpt::get_scalar(records, "__meta__/lambda2");
  cfg.p_norm = ckpt::get_scalar(records, "__meta__/p_norm");
  cfg.augment = ckpt::get_scalar(records, "__meta__/augment") != 0;
  cfg.adam.lr = ckpt::get_scalar(records, "__meta__/adam_lr");
  cfg.adam.beta1 = ckpt::get_scalar(records, "__meta__/adam_beta1");
  cfg.adam.beta2 = ckpt::get_scalar(records, "__meta__/adam_beta2");
  cfg.adam.epsilon = ckpt::get_scalar(records, "__meta__/adam_eps");
  cfg.seed = std::stoull(ckpt::get_bytes(records, "__meta__/seed"));
  cfg.g_widths = read_widths(records, "__meta__/g_widths");
  cfg.d_widths = read_widths(records, "__meta__/d_widths");

  TrainingRunState st = init_training(cfg);

  ParamList<Real> pg, pd, pq;
  st.G.visit("g", pg);
  st.D.visit("d", pd);
  st.Q.visit("q", pq);
  auto restore = [&](ParamList<Real>& pl) {
    for (auto& p : pl) {
      const auto* r = ckpt::find_record(records, p.name);
      if (!r) throw DataError("checkpoint: missing tensor '" + p.name + "'");
      if (r->shape != p.tensor->shape)
        throw DataError("checkpoint: shape mismatch for '" + p.name + "'");
      p.tensor->v.assign(r->data.begin(), r->data.end());
    }
  };
  restore(pg);
  restore(pd);
  restore(pq);

  auto restore_adam = [&](const std::string& net, const ParamList<Real>& pl,
                          nn::AdamStateT<Real>& stt) {
    size_t k = 0;
    for (const auto& p : pl) {
      if (!p.trainable) continue;
      for (const char* which : {"m", "v"}) {
        const auto* r = ckpt::find_record(records, "__opt__/" + net + "/" + which + "/" + p.name);
        if (!r) throw DataError("checkpoint: missing optimizer record for '" + p.name + "'");
        Tensor& t = which[0] == 'm' ? stt.m[k] : stt.v[k];
        t.v.assign(r->data.begin(), r->data.end());
      }
      ++k;
    }
    stt.t = (int64_t)ckpt::get_scalar(records, "__opt__/" + net + "/t");
  };
  restore_adam("g", pg, st.adam_g);
  restore_adam("d", pd, st.adam_d);
  restore_adam("q", pq, st.adam_q);

  st.rng = Rng::deserialize(ckpt::get_bytes(records, "__rng__/state"));
  st.sampler_round = (int64_t)ckpt::get_scalar(records, "__sampler__/round");
  st.sampler_pos = (int64_t)ckpt::get_scalar(records, "__sampler__/pos");
  st.iteration = (int64_t)ckpt::get_scalar(records, "__meta__/iteration");
  st.epoch = (int64_t)ckpt::get_scalar(records, "__meta__/epoch");
  return st;
}

// ---- full run ---------------------------------------------------------------------

TrainRunResult train_run_from(TrainingRunState& state, const std::vector<seg::CellInstance>& dataset,
                              const std::string& out_dir, const EpochCallback& on_epoch) {
  const TrainingConfig& cfg = state.cfg;
  if (dataset.empty()) throw DataError("train_run: empty dataset");
  std::vector<seg::CellInstance> augmented =
      cfg.augment ? augment_rotations(dataset) : dataset;
  if ((int64_t)augmented.size() < cfg.batch_size)
    throw DataError(strfmt("train_run: need at least %d instances after augmentation, got %zu",
                           cfg.batch_size, augmented.size()));
  data::TrainSet set = data::to_train_set(augmented);

  const int64_t iters_per_epoch = ((int64_t)augmented.size() + cfg.batch_size - 1) / cfg.batch_size;
  std::filesystem::create_directories(out_dir);
  std::ofstream csv(out_dir + "/losses.csv", std::ios::trunc);
  if (!csv) throw DataError("train_run: cannot write losses.csv under " + out_dir);
  csv << gan::loss_csv_header() << "\n";

  BatchSampler sampler(set.rows.empty() ? 1 : (size_t)set.count, cfg.seed ^ 0x5151,
                       state.sampler_round, state.sampler_pos);

  TrainRunResult result;
  for (int64_t epoch = state.epoch; epoch < cfg.epochs; ++epoch) {
    for (int64_t i = 0; i < iters_per_epoch; ++i) {
      LossReport rep = train_iteration(state, sampler, set);
      csv << gan::loss_csv_row(state.iteration, rep) << "\n";
      ++result.iterations;
    }
    state.epoch = epoch + 1;
    const std::string ck = out_dir + strfmt("/epoch_%lld.ckpt", (long long)state.epoch);
    save_checkpoint(state, ck);
    result.final_checkpoint = ck;
    if (on_epoch) on_epoch(state, state.epoch);
  }
  csv.close();
  return result;
}

TrainRunResult train_run(const std::vector<seg::CellInstance>& dataset, const TrainingConfig& cfg,
                         const std::string& out_dir, const EpochCallback& on_epoch) {
  TrainingRunState state = init_training(cfg);
  return train_run_from(state, dataset, out_dir, on_epoch);
}

}  // namespace cellgan::trainer
