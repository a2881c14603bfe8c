#pragma once

#include "rsplat/common.hpp"

#include <Eigen/Dense>

#include <random>
#include <span>

namespace rsplat {

/// Adam with bias correction for one parameter group.
struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step_count = 0;
  std::vector<double> m;
  std::vector<double> v;
  long skipped_steps = 0;  // steps dropped because of non-finite gradients

  AdamState() = default;
  AdamState(std::size_t n, double learning_rate) : lr(learning_rate), m(n, 0.0), v(n, 0.0) {}

  /// Applies one update in place. Returns false (and leaves params untouched) when any gradient is
  /// non-finite; the skip is counted in `skipped_steps`.
  bool step(std::span<double> params, std::span<const double> grads);
  bool operator==(const AdamState&) const = default;
};

/// One Adam update with externally owned moments; `step` is the 1-based step index. Returns false
/// and changes nothing when a gradient is non-finite.
bool adam_update(std::span<double> params, std::span<const double> grads, std::span<double> m, std::span<double> v,
                 double lr, long step, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

enum class Activation { identity, relu, sigmoid };

/// Fully connected network over column-major batches (one sample per column). All weights and
/// biases live in one flat vector so a single AdamState can drive them.
class SmallMlp {
 public:
  struct Layer {
    int in = 0;
    int out = 0;
    Activation act = Activation::identity;
  };

  /// Values needed for the backward pass of one forward call.
  struct Tape {
    std::vector<Eigen::MatrixXd> inputs;  // input to each layer
    std::vector<Eigen::MatrixXd> pre;     // pre-activation of each layer
    Eigen::MatrixXd output;
  };

  SmallMlp() = default;
  explicit SmallMlp(std::vector<Layer> layers);

  /// PyTorch-style uniform(+-1/sqrt(fan_in)) initialization.
  void init_uniform(std::mt19937_64& rng);

  int input_dim() const { return layers_.front().in; }
  int output_dim() const { return layers_.back().out; }
  const std::vector<Layer>& layers() const { return layers_; }
  std::size_t param_count() const { return params_.size(); }
  std::span<double> params() { return params_; }
  std::span<const double> params() const { return params_; }

  Eigen::Map<Eigen::MatrixXd> weight(int layer);
  Eigen::Map<const Eigen::MatrixXd> weight(int layer) const;
  Eigen::Map<Eigen::VectorXd> bias(int layer);
  Eigen::Map<const Eigen::VectorXd> bias(int layer) const;

  Eigen::MatrixXd forward(const Eigen::MatrixXd& x, Tape* tape = nullptr) const;
  /// Given dL/d(output), accumulates dL/d(params) into `d_params` (same layout as params()) and
  /// returns dL/d(input).
  Eigen::MatrixXd backward(const Tape& tape, const Eigen::MatrixXd& d_out, std::span<double> d_params) const;

  bool operator==(const SmallMlp& o) const;

 private:
  std::size_t offset(int layer) const { return offsets_[layer]; }

  std::vector<Layer> layers_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

/// Two-layer mask network: in -> hidden (ReLU) -> 1 (sigmoid).
SmallMlp make_mask_mlp(int in_dim, int hidden);
/// Three-layer affine network: in -> hidden (ReLU) -> hidden (ReLU) -> 6 (identity). The final layer
/// is zeroed by `init_affine_head` so alpha = 1 + out[0:3] and beta = out[3:6] start at (1, 0).
SmallMlp make_affine_mlp(int in_dim, int hidden);
void init_affine_head(SmallMlp& mlp);

/// Learning rate decaying log-linearly from `init` to `final` over `max_steps`.
double exponential_lr(double init, double final, long step, long max_steps);

}  // namespace rsplat
