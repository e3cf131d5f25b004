#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cellgan/dataset.hpp"
#include "cellgan/losses.hpp"
#include "cellgan/nn.hpp"

namespace cellgan::trainer {

struct TrainingConfig {
  int batch_size = 64;
  double lambda1 = 10.0;
  double lambda2 = 1.0;
  int d_steps = 5;
  int epochs = 10;
  int K = 5;
  int dim_z = 32;
  uint64_t seed = 0;
  double p_norm = 2.0;
  nn::AdamConfig adam;
  std::vector<int> g_widths = {128, 64, 32};  // seed channels then per-upsample-block outputs
  std::vector<int> d_widths = {32, 64, 128};  // per-downsample-block outputs
  bool augment = true;

  void validate() const;
};

nn::NetworkSpec generator_spec(const TrainingConfig& cfg);
nn::NetworkSpec discriminator_spec(const TrainingConfig& cfg);

struct TrainingRunState {
  TrainingConfig cfg;
  nn::GeneratorT<Real> G;
  nn::DiscriminatorT<Real> D;
  nn::AuxHeadT<Real> Q;
  nn::AdamStateT<Real> adam_g, adam_d, adam_q;
  Rng rng;  // noise and interpolation draws
  int64_t iteration = 0;
  int64_t epoch = 0;
  int64_t sampler_round = 0;
  int64_t sampler_pos = 0;
  std::vector<gan::LossReport> history;
  std::vector<char> update_log;  // 'D' / 'G' / 'Q' sub-step sequence
};

TrainingRunState init_training(const TrainingConfig& cfg);

// Without-replacement batch cursor. The permutation for round r is a pure
// function of (seed, r), so (round, pos) fully captures the sampler state.
class BatchSampler {
 public:
  BatchSampler(size_t n, uint64_t seed, int64_t round = 0, int64_t pos = 0);
  std::vector<uint32_t> next(int batch);
  int64_t round() const { return round_; }
  int64_t pos() const { return pos_; }

 private:
  void regenerate();
  size_t n_;
  uint64_t seed_;
  int64_t round_, pos_;
  std::vector<uint32_t> perm_;
};

// 90/180/270-degree copies appended after the originals. Provenance records
// the angle; pixel content is a pure permutation.
std::vector<seg::CellInstance> augment_rotations(const std::vector<seg::CellInstance>& dataset);

// One training iteration: d_steps discriminator updates (fresh real batch and
// noise each), one generator update on L_G, then one joint G,Q update on L_Q.
gan::LossReport train_iteration(TrainingRunState& state, BatchSampler& sampler,
                                const data::TrainSet& set);

using EpochCallback = std::function<void(const TrainingRunState&, int64_t epoch)>;

struct TrainRunResult {
  std::string final_checkpoint;
  int64_t iterations = 0;
};

// Full run: augments, iterates epochs x ceil(n/batch), checkpoints each epoch
// end as epoch_{n}.ckpt, writes losses.csv under out_dir.
TrainRunResult train_run(const std::vector<seg::CellInstance>& dataset, const TrainingConfig& cfg,
                         const std::string& out_dir, const EpochCallback& on_epoch = {});

// Resume variant: continues a loaded state until cfg.epochs total epochs.
TrainRunResult train_run_from(TrainingRunState& state, const std::vector<seg::CellInstance>& dataset,
                              const std::string& out_dir, const EpochCallback& on_epoch = {});

void save_checkpoint(const TrainingRunState& state, const std::string& path);
TrainingRunState load_checkpoint(const std::string& path);

}  // namespace cellgan::trainer
