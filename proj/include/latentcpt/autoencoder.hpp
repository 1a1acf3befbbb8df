#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "latentcpt/data.hpp"

namespace latentcpt {

inline constexpr std::size_t kLatentDim = 10;
using LatentVector = std::array<double, kLatentDim>;

struct PosEncodingConfig {
  int d = 20;        // embedding width (columns)
  double base = 10000.0;
  int rows = 10;     // sequence length
};

void validate(const PosEncodingConfig& cfg);

/// rows x d matrix with sin(pos / base^(2i/d)) in column 2i and the matching
/// cosine in column 2i + 1.
Eigen::MatrixXd positional_encoding(const PosEncodingConfig& cfg);

struct ChannelNorm {
  double mean = 0.0;
  double std = 1.0;
};

/// Scalar z-score statistics over every bin of every profile. Throws ZeroStd
/// for a constant channel.
ChannelNorm fit_channel_norm(std::span<const ChannelArray> profiles);
std::vector<double> normalize_channel(std::span<const double> values, const ChannelNorm& norm);
std::vector<double> denormalize_channel(std::span<const double> values, const ChannelNorm& norm);

enum class Activation { Relu, Identity };

struct DenseLayer {
  Eigen::MatrixXd weights;  // out x in
  Eigen::VectorXd biases;   // out
  Activation activation = Activation::Identity;

  Eigen::Index in_dim() const { return weights.cols(); }
  Eigen::Index out_dim() const { return weights.rows(); }
};

struct Architecture {
  std::vector<int> hidden{128, 64};  // encoder hidden widths; decoder mirrors them
  int latent = static_cast<int>(kLatentDim);
};

struct AutoencoderModel {
  Channel channel = Channel::Ic;
  std::vector<DenseLayer> encoder;
  std::vector<DenseLayer> decoder;
  ChannelNorm norm;
  PosEncodingConfig pe;
};

/// Fresh network with fan-in scaled uniform weights and zero biases. Hidden
/// layers use rectifiers; latent and output layers are linear.
AutoencoderModel init_autoencoder(Channel channel, const Architecture& arch,
                                  const ChannelNorm& norm, const PosEncodingConfig& pe,
                                  std::uint64_t seed);

/// Structural checks for a deployable model: 200 -> ... -> 10 -> ... -> 200,
/// finite parameters, positive norm std, PE covering 200 entries.
void check_autoencoder(const AutoencoderModel& model);

/// Normalized profile plus positional encoding, flattened row-major. This is
/// both the network input and its reconstruction target.
Eigen::RowVectorXd prepare_input(const AutoencoderModel& model, std::span<const double> profile);

LatentVector encode(const AutoencoderModel& model, std::span<const double> profile);

/// Decoder output with the positional encoding removed, back in channel units.
ChannelArray decode(const AutoencoderModel& model, const LatentVector& latent);

/// Row i of the result encodes profiles[i].
Eigen::MatrixXd encode_batch(const AutoencoderModel& model, std::span<const ChannelArray> profiles);

struct Gradients {
  // Encoder layers first, then decoder layers.
  std::vector<Eigen::MatrixXd> weights;
  std::vector<Eigen::VectorXd> biases;
};

struct LossAndGradients {
  double mse = 0.0;
  Gradients gradients;
};

/// Mean squared reconstruction error over batch x 200 prepared entries and
/// its exact gradient with respect to every weight and bias.
LossAndGradients loss_and_gradients(const AutoencoderModel& model,
                                    std::span<const ChannelArray> batch);

/// Same, on rows that are already prepared network inputs.
LossAndGradients loss_and_gradients_prepared(const AutoencoderModel& model,
                                             const Eigen::MatrixXd& inputs);

double reconstruction_mse(const AutoencoderModel& model, const Eigen::MatrixXd& inputs);

struct TrainConfig {
  double learning_rate = 1e-3;
  std::size_t batch_size = 32;
  std::size_t max_epochs = 500;
  std::size_t patience_epochs = 20;
  std::uint64_t seed = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

void validate(const TrainConfig& cfg);

struct EpochRecord {
  std::size_t epoch = 0;
  double train_mse = 0.0;  // mean of the epoch's minibatch losses
  double val_mse = 0.0;
};

struct TrainResult {
  AutoencoderModel model;  // weights from best_epoch
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  double initial_val_mse = 0.0;  // before any update
};

/// Minibatch Adam on the reconstruction MSE with validation early stopping.
/// Channel statistics are fit on `train` only. Throws DivergedLoss when a
/// loss turns non-finite.
TrainResult train_autoencoder(std::span<const ChannelArray> train,
                              std::span<const ChannelArray> val, Channel channel,
                              const TrainConfig& cfg, const Architecture& arch = {},
                              const PosEncodingConfig& pe = {});

double rmse(std::span<const double> reconstructed, std::span<const double> original);

/// Mean of |ln y_i - ln x_i|.
double abs_log_difference(std::span<const double> reconstructed, std::span<const double> original);

}  // namespace latentcpt
