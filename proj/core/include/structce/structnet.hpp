#pragma once

#include <span>
#include <string>
#include <vector>

#include "structce/estimators.hpp"
#include "structce/phy.hpp"

namespace structce::net {

using numerics::CVec;
using numerics::RngStream;
using phy::ModulationScheme;
using phy::ReceivedGrid;
using phy::Subframe;
using phy::SubframeConfig;

/// Two-hidden-layer MLP with rectified-linear activations and a scalar logit
/// output. Weights live in one flat vector: [w1 | b1 | w2 | b2 | w3 | b3],
/// w1 and w2 row-major. Sizes are capped (input 16, hidden 64) to keep the
/// per-sample forward pass allocation-free.
struct Classifier {
  int input = 0;
  int h1 = 16;
  int h2 = 8;
  std::vector<double> theta;

  int num_params() const { return h1 * input + h1 + h2 * h1 + h2 + h2 + 1; }
  int off_w1() const { return 0; }
  int off_b1() const { return h1 * input; }
  int off_w2() const { return off_b1() + h1; }
  int off_b2() const { return off_w2() + h2 * h1; }
  int off_w3() const { return off_b2() + h2; }
  int off_b3() const { return off_w3() + h2; }

  /// Fan-in scaled init: hidden weights ~ N(0, 2/fan_in), output weights
  /// ~ N(0, 1/fan_in), biases zero.
  void init(int input_size, int hidden1, int hidden2, RngStream& rng);
  double forward(const double* features) const;
};

/// Channel layer + shared binary classifier. One complex channel column per
/// (pilot subcarrier, stream); those columns are the channel estimate. The
/// classifier instance is shared across subcarriers, streams, dimensions and
/// bit levels.
struct StructNetParams {
  int nr = 0;
  int nt = 0;
  std::vector<int> pilot_subcarriers;  // column index -> grid subcarrier
  std::vector<cd> w;                   // [k][stream][rx]
  Classifier classifier;
  ModulationScheme modulation;

  int num_columns() const { return static_cast<int>(pilot_subcarriers.size()); }
  cd* col(int k, int s) { return w.data() + (static_cast<std::size_t>(k) * nt + s) * nr; }
  const cd* col(int k, int s) const {
    return w.data() + (static_cast<std::size_t>(k) * nt + s) * nr;
  }
};

struct TrainConfig {
  int epochs = 50;
  int batch_size = 256;
  double lr_classifier = 1e-3;
  double lr_channel = 1e-2;
  enum class Init { kSmallRandom, kStackedLs };
  Init init = Init::kStackedLs;
  /// Update rule for the channel-layer group. Adaptive-moment normalization
  /// keeps stepping at full size once the classifier separates the pilots
  /// (the loss then has no finite minimizer in W), which walks the weights
  /// off the channel; momentum SGD lets those steps die with the gradient.
  enum class ChannelOpt { kMomentumSgd, kAdam };
  ChannelOpt channel_opt = ChannelOpt::kMomentumSgd;
  double smoothness_lambda = 0.0;  // frequency-smoothness penalty weight
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int max_restarts = 3;
  int hidden1 = 16;
  int hidden2 = 8;
};

/// One binary-detection task: predict bit `level` of dimension `dim`
/// (0 = real, 1 = imag) of stream `stream`'s known pilot on RE (t, k).
/// `k` indexes the channel-layer column, `t` is the grid symbol index and
/// `label` is the pilot's sign bit in that dimension (pilots are QPSK, so
/// every bit level of a dimension carries the same sign label).
struct TrainingSample {
  int k = 0;
  int t = 0;
  int stream = 0;
  int dim = 0;
  int level = 0;
  int label = 1;  // +1 or -1
};

/// One sample per (pilot RE) x (stream) x (dimension) x (bit level), in
/// (t, k, stream, dim, level) order. Requires non-orthogonal pilots: every
/// stream must be active on every pilot RE.
std::vector<TrainingSample> build_training_set(const Subframe& subframe, const ReceivedGrid& y);

/// r = e^{-j theta_d} (y - w_i (x_i - b a e_d)) with e_R = 1, e_I = j,
/// theta_R = 0, theta_I = pi/2: the known pilot is replaced by the canonical
/// target b*a on the real axis of stream i's channel direction.
CVec channel_shift(const ReceivedGrid& y, const Subframe& subframe, const TrainingSample& sample,
                   const StructNetParams& params);

/// Folds every interfering stream j != target_stream in stream-index order:
/// u = w_j^H r / ||w_j||^2, both dimensions of u are reduced by cmod with
/// period 2a, and the lattice offset is subtracted back along w_j. Exactly
/// invariant to the interferer's constellation symbol when w_j matches the
/// true channel column. Throws DegenerateWeightsError when ||w_j|| <= 1e-9.
CVec interference_fold(const CVec& r, const StructNetParams& params, int col,
                       int target_stream);

/// Classifier logit for one sample: shift, fold, then the shared MLP on the
/// 2*nr real features z/a.
double forward(const ReceivedGrid& y, const Subframe& subframe, const TrainingSample& sample,
               const StructNetParams& params);

/// Mean binary cross-entropy of logistic(logit) against the {0,1}-mapped
/// labels plus lambda * sum_k ||W_{k+1} - W_k||_F^2. Gradients are over the
/// real parameter vector [W re/im interleaved, column-major | classifier
/// theta]; the fold's lattice offset is treated as locally constant
/// (straight-through), making the fold affine with unit slope inside a cell.
struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};
LossGrad loss_and_gradients(const ReceivedGrid& y, const Subframe& subframe,
                            std::span<const TrainingSample> samples,
                            const StructNetParams& params, double lambda);

/// Total real parameter count, and flatten/unflatten in the gradient order.
int num_params(const StructNetParams& params);
std::vector<double> flatten_params(const StructNetParams& params);
void unflatten_params(std::span<const double> theta, StructNetParams& params);

/// Smallest distance of any fold input to a cmod cell boundary across the
/// given samples (used to pick off-boundary gradient-check points).
double min_fold_boundary_margin(const ReceivedGrid& y, const Subframe& subframe,
                                std::span<const TrainingSample> samples,
                                const StructNetParams& params);

struct TrainStats {
  int epochs_run = 0;
  double final_loss = 0.0;
  double wall_ms = 0.0;
  int restarts = 0;
  bool fell_back = false;
};

struct TrainResult {
  StructNetParams params;
  TrainStats stats;
};

/// Per-subframe training on pilot REs only: adaptive-moment mini-batch steps
/// over the shuffled training set, separate step sizes for the channel layer
/// and the classifier. Deterministic given (inputs, rng). On repeated
/// degenerate-weights restarts (more than max_restarts) the channel layer
/// falls back to the stacked least-squares estimate and the fallback is
/// recorded in the stats.
TrainResult train_subframe(const ReceivedGrid& y, const Subframe& subframe,
                           const TrainConfig& cfg, RngStream& rng);

/// Reads the channel estimate out of the channel-layer weights: the same
/// per-subcarrier column at every pilot symbol position, interpolated to the
/// full grid. Method tag "structnet-ce".
estimators::ChannelEstimate extract_channel(const StructNetParams& params,
                                            const SubframeConfig& cfg);

enum class DetectMode {
  kEqualizer,  // MMSE-equalize with the extracted channel, hard demap
  // Shared-classifier detection (QPSK only): per dimension, the unknown
  // orthogonal level is removed by hypothesis exactly as the known pilot
  // level is removed in training, interferers are folded, and the joint
  // symbol maximizes the summed classifier log-likelihood.
  kClassifier,
};

/// Data-bit decisions per stream in Subframe payload order.
std::vector<std::vector<std::uint8_t>> detect_data(const ReceivedGrid& y,
                                                   const Subframe& subframe,
                                                   const StructNetParams& params, double sigma2,
                                                   DetectMode mode);

/// Flat binary snapshot: dimension header followed by float-64 payload
/// (channel weights re/im interleaved, then classifier weights).
void save_params(const StructNetParams& params, const std::string& path);
StructNetParams load_params(const std::string& path);

}  // namespace structce::net
