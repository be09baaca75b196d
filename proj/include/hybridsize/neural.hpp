#pragma once

// Imitation learning of the MPC policy: training-data sampling from the exact
// controller, a FiLM-conditioned residual 1-D CNN with hand-written backward
// pass, Huber loss, AdamW, and the weights / dataset file formats.
//
// Network (per sample, H time steps, C channels):
//   input   1x1 conv 2 -> C on the (rps, load) series
//   blocks  h + conv(gelu(gn(film(conv(gelu(gn(h)))))))
//           film: h(1 + gamma) + beta, gamma/beta from a shared 4 -> hidden -> 2C*blocks MLP
//   pool    mean over H
//   head    C -> 128 -> 48 -> 2, then tanh (storage) and sigmoid (generator)

#include "hybridsize/core.hpp"
#include "hybridsize/scenarios.hpp"

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace hybridsize::neural {

inline constexpr int kSeriesChannels = 2;  // rps, load
inline constexpr int kCondScalars = 4;     // soc, prev dtg, ess scale, rps scale
inline constexpr int kOutputs = 2;         // ess, dtg

/// Parameter and gradient storage. A fixed base alignment keeps Eigen's
/// vectorized kernels on the same code path for every allocation.
template <typename T>
using AlignedVector = std::vector<T, Eigen::aligned_allocator<T>>;

struct Architecture {
  int horizon = 36;
  int channels = 96;
  int blocks = 4;
  int cond_hidden = 48;
  int head_hidden1 = 128;
  int head_hidden2 = 48;
  int groups = 8;
  int kernel = 3;

  /// Throws std::invalid_argument for non-positive sizes, channels not
  /// divisible by groups, or an even kernel.
  void validate() const;
};

struct TensorSpec {
  std::string name;
  std::vector<int> shape;

  [[nodiscard]] std::size_t size() const;
};

/// Parameter tensors in storage order. Conv weights are [out, kernel, in],
/// linear weights [out, in], both row-major.
std::vector<TensorSpec> parameter_layout(const Architecture& arch);
std::size_t parameter_count(const Architecture& arch);

template <typename T>
using Mat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic>;

/// Activations kept by forward() for backward().
template <typename T>
struct Workspace {
  struct Block {
    Mat<T> input, xhat1, pre1, col1, conv1, xhat2, pre2, col2;
    Mat<T> inv_std1, inv_std2;  // groups x batch
  };
  int batch = 0;
  Mat<T> x0, h0, cond, cond_pre, cond_act, film, pooled;
  std::vector<Block> blocks;
  Mat<T> head_pre1, head_act1, head_pre2, head_act2, logits, out;
  // backward scratch
  Mat<T> d_h, d_tmp, d_col, d_film;
};

template <typename T>
class Network {
 public:
  Network() = default;
  explicit Network(const Architecture& arch);  // all parameters zero

  /// Fan-in scaled uniform weights and biases, unit GroupNorm scales, and a
  /// zero output layer so the untrained outputs sit at the squasher midpoint.
  static Network initialized(const Architecture& arch, std::uint64_t seed);

  [[nodiscard]] const Architecture& architecture() const { return arch_; }
  [[nodiscard]] std::span<T> parameters() { return params_; }
  [[nodiscard]] std::span<const T> parameters() const { return params_; }
  /// View of one tensor by name; throws std::out_of_range if unknown.
  [[nodiscard]] std::span<T> tensor(const std::string& name);

  /// series: batch x 2 x H (rps then load per sample), cond: batch x 4.
  /// out: batch x 2 as (ess in (-1, 1), dtg in (0, 1)). Throws
  /// std::invalid_argument on size mismatch.
  void forward(std::span<const T> series, std::span<const T> cond, int batch, std::span<T> out,
               Workspace<T>& ws) const;
  /// Inference: evaluates the samples one at a time, so each output is
  /// bitwise independent of the rest of the batch.
  void forward(std::span<const T> series, std::span<const T> cond, int batch,
               std::span<T> out) const;

  /// Gradient of a loss with d loss / d out = d_out (batch x 2) after the
  /// forward() that filled `ws`. grads has the parameter layout and is
  /// overwritten.
  void backward(Workspace<T>& ws, std::span<const T> d_out, std::span<T> grads) const;

 private:
  struct Offsets {
    std::size_t in_w, in_b;
    struct Block {
      std::size_t gn1_g, gn1_b, conv1_w, conv1_b, gn2_g, gn2_b, conv2_w, conv2_b;
    };
    std::vector<Block> blocks;
    std::size_t cond1_w, cond1_b, cond2_w, cond2_b;
    std::size_t head1_w, head1_b, head2_w, head2_b, head3_w, head3_b;
  };

  Architecture arch_;
  AlignedVector<T> params_;
  std::vector<std::string> names_;
  std::vector<std::size_t> starts_;
  Offsets off_{};
};

extern template class Network<float>;
extern template class Network<double>;

using PolicyNetwork = Network<float>;

/// h(1 + gamma) + beta per channel; h is channel-fastest (C x L).
template <typename T>
std::vector<T> film_modulate(std::span<const T> h, std::span<const T> gamma,
                             std::span<const T> beta);

/// Mean over elements of the Huber loss; fills grad (d loss / d pred) when
/// it is non-empty. Throws std::invalid_argument on size mismatch.
template <typename T>
T huber_loss(std::span<const T> pred, std::span<const T> target, T delta,
             std::span<T> grad = {});

struct AdamWConfig {
  double learning_rate = 4e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  double weight_decay = 0.01;
};

template <typename T>
struct AdamWState {
  AlignedVector<T> m;
  AlignedVector<T> v;
  long step = 0;
};

/// One AdamW update: weight decay shrinks the parameters directly and never
/// enters the moment estimates.
template <typename T>
void adamw_step(std::span<T> params, std::span<const T> grads, AdamWState<T>& state,
                const AdamWConfig& cfg);

/// Normalization constants shared by the data, the trainer and the policy.
struct FeatureScaling {
  double rps_mw = 150.0;       // series and capacity scale
  double load_mw = 40.0;       // nominal load
  double ess_energy_mwh = 80.0;
  double ess_power_mw = 80.0;  // storage target scale
  double dtg_mw = 40.0;        // generator target scale
};

/// Scales from the global capacities of `cfg`.
FeatureScaling scaling_for(const SystemConfig& cfg, double nominal_load_mw = 40.0);

struct Features {
  std::vector<float> series;  // 2 x H
  std::array<float, kCondScalars> cond{};
};

Features encode_features(const SystemState& state, const HorizonWindow& window,
                         const SystemConfig& cfg, const FeatureScaling& scaling);

struct TrainingExample {
  Features features;
  std::array<float, kOutputs> target{};  // ess / ess scale, dtg / dtg scale
};

/// Long wind-speed and load series from which training windows are cut.
struct DataPools {
  std::vector<double> wind_ms;
  std::vector<double> load_mw;
};

DataPools synth_pools(std::uint64_t seed, std::size_t n_steps);

struct SamplingConfig {
  SystemConfig global;  // limits, weights and global capacities
  FeatureScaling scaling;
  scenarios::PowerCurve curve = scenarios::default_power_curve();
  double prob_prev_off = 0.5;
};

/// One example: uniform capacities in [0, 1] of the global maxima, a random
/// window, uniform state of charge and previous generator power in
/// {0} u [dtg_min, dtg_max], labelled with the exact MPC action. A failed
/// solve is redrawn; `failures` counts redraws. Throws std::invalid_argument
/// if the pools are shorter than one horizon.
TrainingExample sample_training_example(std::mt19937_64& rng, const DataPools& pools,
                                        const SamplingConfig& cfg, long* failures = nullptr);

struct Dataset {
  int horizon = 0;
  FeatureScaling scaling;
  std::vector<float> series;  // n x 2 x H
  std::vector<float> cond;    // n x 4
  std::vector<float> target;  // n x 2
  long failures = 0;

  [[nodiscard]] std::size_t size() const { return target.size() / kOutputs; }
  void push_back(const TrainingExample& e);
};

/// Example i uses its own generator seeded from (seed, i), so the result
/// does not depend on `threads`.
Dataset sample_dataset(std::size_t n, std::uint64_t seed, const DataPools& pools,
                       const SamplingConfig& cfg, int threads = 0,
                       const std::function<void(std::size_t)>& progress = {});

void save_dataset(const Dataset& d, const std::filesystem::path& path);
Dataset load_dataset(const std::filesystem::path& path);

struct TrainConfig {
  int epochs = 50;
  int batch_size = 512;
  double learning_rate = 4e-4;
  bool cosine_decay = false;  // anneal the rate to zero over all steps
  double weight_decay = 0.01;
  double huber_delta = 1.0;
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
};

/// Rate for optimizer step `step` of `total_steps`: constant, or half a
/// cosine period from learning_rate down to zero.
double scheduled_learning_rate(const TrainConfig& cfg, long step, long total_steps);

struct EpochMetrics {
  int epoch = 0;
  double train_loss = 0.0;  // mean Huber over the epoch's batches
  double val_loss = 0.0;
  double val_mae_mw = 0.0;  // mean over both outputs, in MW
  double seconds = 0.0;
};

/// Trained network with the scaling its inputs and outputs use.
struct PolicyModel {
  PolicyNetwork net;
  FeatureScaling scaling;
};

struct TrainResult {
  PolicyModel model;
  std::vector<EpochMetrics> history;
};

/// Validation rows are a seeded random 10 % (by default) of the dataset.
/// Throws std::invalid_argument when the training part holds fewer than two
/// batches and std::runtime_error when the loss turns non-finite.
TrainResult train(const Dataset& data, const Architecture& arch, const TrainConfig& cfg,
                  const std::function<void(const EpochMetrics&)>& on_epoch = {});

/// Validation metrics of `model` on rows `rows` of `data`.
EpochMetrics evaluate(const PolicyModel& model, const Dataset& data,
                      std::span<const std::size_t> rows, double huber_delta = 1.0);

/// One JSON manifest line (format, version, architecture, scaling, ordered
/// tensors with shapes) followed by the float32 little-endian payload.
void save_weights(const PolicyModel& model, const std::filesystem::path& path);
/// Throws std::runtime_error on a malformed manifest, a version or layout
/// mismatch, or a payload of the wrong length.
PolicyModel load_weights(const std::filesystem::path& path);

}  // namespace hybridsize::neural
