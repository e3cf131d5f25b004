#pragma once

#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cellgan/rng.hpp"
#include "cellgan/tape.hpp"

namespace cellgan::nn {

using ad::Shape;
using ad::TapeT;
using ad::TensorT;
using ad::Var;

enum class BlockKind { plain, upsample, downsample };
enum class NetRole { generator, discriminator, auxiliary };

struct ResBlockSpec {
  BlockKind kind = BlockKind::plain;
  int in_channels = 0;
  int out_channels = 0;
  bool use_batchnorm = false;
};

struct NetworkSpec {
  NetRole role = NetRole::discriminator;
  std::vector<ResBlockSpec> blocks;
  int K = 5;
  int dim_z = 32;
  int image_channels = 3;
  int image_hw = 32;
};

// Throws ConfigError naming the first offending block when channel or spatial
// chaining is inconsistent.
void validate_spec(const NetworkSpec& spec);

struct AdamConfig {
  double lr = 2e-4;
  double beta1 = 0.5;
  double beta2 = 0.9;
  double epsilon = 1e-8;
};

// Binds raw parameter tensors to tape leaves. Parameters registered through
// bind() get gradient-tracked leaves; anything else enters the graph as a
// cached constant, which is how "frozen" networks take part in a loss.
template <typename S>
class BindingT {
 public:
  explicit BindingT(TapeT<S>& tape) : tape_(&tape) {}

  Var bind(const TensorT<S>& t) {
    Var v = tape_->leaf(t, true);
    vars_[&t] = v;
    return v;
  }

  Var operator()(const TensorT<S>& t) {
    auto it = vars_.find(&t);
    if (it != vars_.end()) return it->second;
    Var v = tape_->constant(t);
    vars_.emplace(&t, v);
    return v;
  }

  bool is_bound(const TensorT<S>& t) const { return vars_.count(&t) > 0; }
  Var var_of(const TensorT<S>& t) const { return vars_.at(&t); }
  TapeT<S>& tape() { return *tape_; }

 private:
  TapeT<S>* tape_;
  std::unordered_map<const TensorT<S>*, Var> vars_;
};

template <typename S>
struct ParamRef {
  std::string name;
  TensorT<S>* tensor;
  bool trainable;
};

template <typename S>
using ParamList = std::vector<ParamRef<S>>;

// ---- layers ---------------------------------------------------------------

template <typename S>
struct DenseT {
  TensorT<S> W;  // [in, out]
  TensorT<S> b;  // [out]
  Var forward(BindingT<S>& bind, Var x) const;
  void init(int in, int out, Rng& rng);
  void visit(const std::string& prefix, ParamList<S>& out);
};

template <typename S>
struct Conv2dT {
  TensorT<S> W;  // [out, in, k, k]
  TensorT<S> b;  // [out]
  int pad = 1;
  Var forward(BindingT<S>& bind, Var x) const;
  void init(int in, int out, int k, int pad_, Rng& rng);
  void visit(const std::string& prefix, ParamList<S>& out);
};

template <typename S>
struct BatchNormT {
  TensorT<S> gamma, beta;
  TensorT<S> running_mean, running_var;
  double momentum = 0.9;
  double eps = 1e-5;
  Var forward(BindingT<S>& bind, Var x, bool training);
  void init(int channels);
  void visit(const std::string& prefix, ParamList<S>& out);
};

template <typename S>
struct ResBlockT {
  ResBlockSpec spec;
  Conv2dT<S> conv1, conv2;
  std::optional<Conv2dT<S>> skip;  // 1x1, present when channels change
  std::optional<BatchNormT<S>> bn1, bn2;
  Var forward(BindingT<S>& bind, Var x, bool training);
  void init(const ResBlockSpec& sp, Rng& rng);
  void visit(const std::string& prefix, ParamList<S>& out);
};

// ---- networks ---------------------------------------------------------------

template <typename S>
struct GeneratorT {
  NetworkSpec spec;
  DenseT<S> stem;  // [K+dim_z] -> [c0 * seed_hw^2]
  std::vector<ResBlockT<S>> blocks;
  std::optional<BatchNormT<S>> out_bn;
  Conv2dT<S> to_rgb;  // 3x3 -> image_channels
  int seed_hw = 8;

  // noise [N, K+dim_z] -> images [N, C, hw, hw] in [-1, 1]
  Var forward(BindingT<S>& bind, Var noise, bool training);
  void visit(const std::string& prefix, ParamList<S>& out);
};

template <typename S>
struct DiscriminatorT {
  NetworkSpec spec;
  std::vector<ResBlockT<S>> blocks;
  DenseT<S> head;  // [c_last] -> [1]

  // pooled trunk features [N, c_last]; block_acts receives each block output
  Var trunk(BindingT<S>& bind, Var x, std::vector<Var>* block_acts = nullptr);
  // critic scores [N]
  Var forward(BindingT<S>& bind, Var x);
  void visit(const std::string& prefix, ParamList<S>& out);
};

// Q's own parameters: a softmax head over the discriminator trunk.
template <typename S>
struct AuxHeadT {
  DenseT<S> head;  // [c_last] -> [K]
  int K = 5;
  Var posterior_from_trunk(BindingT<S>& bind, Var pooled) const;
  void visit(const std::string& prefix, ParamList<S>& out);
};

template <typename S> GeneratorT<S> build_generator(const NetworkSpec& spec, uint64_t init_seed);
template <typename S> DiscriminatorT<S> build_discriminator(const NetworkSpec& spec, uint64_t init_seed);
template <typename S> AuxHeadT<S> build_aux_head(int trunk_channels, int K, uint64_t init_seed);

template <typename S> int64_t param_count(const ParamList<S>& params);

// ---- noise -----------------------------------------------------------------

template <typename S>
struct NoiseBatchT {
  TensorT<S> input;         // [N, K+dim_z], categorical block first
  std::vector<int> labels;  // category index per row
  int K = 0;
  int dim_z = 0;
};

// Uniform one-hot category plus i.i.d. standard normal block, reproducible
// from the rng state.
template <typename S>
NoiseBatchT<S> sample_noise(int batch, int K, int dim_z, Rng& rng);

// Deterministic noise with chosen categories and a given gaussian block;
// used for montages (fixed z per row, category per column).
template <typename S>
NoiseBatchT<S> make_noise(const std::vector<int>& categories, const std::vector<double>& z,
                          int K, int dim_z);

// ---- optimizer ---------------------------------------------------------------

template <typename S>
struct AdamStateT {
  std::vector<TensorT<S>> m, v;
  int64_t t = 0;
};

// Bias-corrected Adam over a fixed parameter list. `grads[i]` may be empty
// (no gradient reached the tensor this step); the moments still decay.
template <typename S>
void adam_step(const std::vector<TensorT<S>*>& params, const std::vector<TensorT<S>>& grads,
               AdamStateT<S>& state, const AdamConfig& cfg);

template <typename S>
AdamStateT<S> make_adam_state(const std::vector<TensorT<S>*>& params);

}  // namespace cellgan::nn
