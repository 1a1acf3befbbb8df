#include "latentcpt/autoencoder.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "latentcpt/error.hpp"
#include "latentcpt/random.hpp"

namespace latentcpt {

namespace {

void require_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw Error(ErrorKind::NonFiniteInput, std::string(what) + " contains a non-finite value");
    }
  }
}

void check_same_length(std::size_t a, std::size_t b) {
  if (a != b) {
    throw Error(ErrorKind::LengthMismatch,
                "arrays differ in length: " + std::to_string(a) + " vs " + std::to_string(b));
  }
}

Eigen::MatrixXd apply_activation(Eigen::MatrixXd z, Activation act) {
  if (act == Activation::Relu) z = z.cwiseMax(0.0);
  return z;
}

// Forward pass over the concatenated encoder and decoder, keeping every
// layer input and pre-activation for the backward pass.
struct ForwardTrace {
  std::vector<Eigen::MatrixXd> inputs;  // inputs[l] feeds layer l; back() is the output
  std::vector<Eigen::MatrixXd> pre;     // pre-activations
};

std::vector<const DenseLayer*> all_layers(const AutoencoderModel& model) {
  std::vector<const DenseLayer*> layers;
  for (const auto& l : model.encoder) layers.push_back(&l);
  for (const auto& l : model.decoder) layers.push_back(&l);
  return layers;
}

Eigen::MatrixXd run_layers(const std::vector<DenseLayer>& layers, Eigen::MatrixXd x) {
  for (const auto& layer : layers) {
    Eigen::MatrixXd z = x * layer.weights.transpose();
    z.rowwise() += layer.biases.transpose();
    x = apply_activation(std::move(z), layer.activation);
  }
  return x;
}

ForwardTrace forward(const std::vector<const DenseLayer*>& layers, const Eigen::MatrixXd& x) {
  ForwardTrace trace;
  trace.inputs.reserve(layers.size() + 1);
  trace.pre.reserve(layers.size());
  trace.inputs.push_back(x);
  for (const DenseLayer* layer : layers) {
    Eigen::MatrixXd z = trace.inputs.back() * layer->weights.transpose();
    z.rowwise() += layer->biases.transpose();
    trace.inputs.push_back(apply_activation(z, layer->activation));
    trace.pre.push_back(std::move(z));
  }
  return trace;
}

void check_layer_stack(const std::vector<DenseLayer>& layers, const char* what) {
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const auto& l = layers[i];
    if (l.biases.size() != l.out_dim()) {
      throw Error(ErrorKind::DimensionMismatch, std::string(what) + " layer bias size mismatch");
    }
    if (i > 0 && layers[i - 1].out_dim() != l.in_dim()) {
      throw Error(ErrorKind::DimensionMismatch, std::string(what) + " layer shapes do not chain");
    }
    if (!l.weights.allFinite() || !l.biases.allFinite()) {
      throw Error(ErrorKind::NonFiniteInput, std::string(what) + " has non-finite parameters");
    }
  }
}

struct AdamState {
  std::vector<Eigen::MatrixXd> m_w, v_w;
  std::vector<Eigen::VectorXd> m_b, v_b;
  std::size_t step = 0;
};

AdamState make_adam_state(const AutoencoderModel& model) {
  AdamState s;
  for (const DenseLayer* l : all_layers(model)) {
    s.m_w.push_back(Eigen::MatrixXd::Zero(l->out_dim(), l->in_dim()));
    s.v_w.push_back(Eigen::MatrixXd::Zero(l->out_dim(), l->in_dim()));
    s.m_b.push_back(Eigen::VectorXd::Zero(l->out_dim()));
    s.v_b.push_back(Eigen::VectorXd::Zero(l->out_dim()));
  }
  return s;
}

template <typename Param>
void adam_update(Param& param, const Param& grad, Param& m, Param& v, const TrainConfig& cfg,
                 double correction1, double correction2) {
  m = cfg.beta1 * m + (1.0 - cfg.beta1) * grad;
  v = cfg.beta2 * v + (1.0 - cfg.beta2) * grad.cwiseProduct(grad);
  param.array() -= cfg.learning_rate * (m.array() / correction1) /
                   ((v.array() / correction2).sqrt() + cfg.epsilon);
}

void adam_step(AutoencoderModel& model, const Gradients& grads, AdamState& state,
               const TrainConfig& cfg) {
  ++state.step;
  const double c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));
  std::size_t i = 0;
  for (auto* stack : {&model.encoder, &model.decoder}) {
    for (auto& layer : *stack) {
      adam_update(layer.weights, grads.weights[i], state.m_w[i], state.v_w[i], cfg, c1, c2);
      adam_update(layer.biases, grads.biases[i], state.m_b[i], state.v_b[i], cfg, c1, c2);
      ++i;
    }
  }
}

Eigen::MatrixXd prepare_rows(const AutoencoderModel& model, std::span<const ChannelArray> rows) {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(rows.size()),
                      static_cast<Eigen::Index>(kProfileBins));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = prepare_input(model, rows[i]);
  }
  return out;
}

}  // namespace

void validate(const PosEncodingConfig& cfg) {
  if (cfg.d <= 0 || cfg.d % 2 != 0) {
    throw Error(ErrorKind::InvalidInput, "positional encoding width must be even and positive");
  }
  if (cfg.rows < 1) throw Error(ErrorKind::InvalidInput, "positional encoding needs rows >= 1");
  if (!(cfg.base > 1.0)) throw Error(ErrorKind::InvalidInput, "positional encoding base must be > 1");
}

Eigen::MatrixXd positional_encoding(const PosEncodingConfig& cfg) {
  validate(cfg);
  Eigen::MatrixXd pe(cfg.rows, cfg.d);
  for (int pos = 0; pos < cfg.rows; ++pos) {
    for (int i = 0; i < cfg.d / 2; ++i) {
      const double angle = pos / std::pow(cfg.base, 2.0 * i / cfg.d);
      pe(pos, 2 * i) = std::sin(angle);
      pe(pos, 2 * i + 1) = std::cos(angle);
    }
  }
  return pe;
}

ChannelNorm fit_channel_norm(std::span<const ChannelArray> profiles) {
  if (profiles.empty()) throw Error(ErrorKind::InvalidInput, "cannot fit norm on no profiles");
  double sum = 0.0;
  for (const auto& p : profiles) sum = std::accumulate(p.begin(), p.end(), sum);
  const double n = static_cast<double>(profiles.size() * kProfileBins);
  const double mean = sum / n;
  double ss = 0.0;
  for (const auto& p : profiles) {
    for (double v : p) ss += (v - mean) * (v - mean);
  }
  const double std = std::sqrt(ss / n);
  if (!(std > 0.0) || !std::isfinite(std)) {
    throw Error(ErrorKind::ZeroStd, "channel has zero variance over the training profiles");
  }
  return {mean, std};
}

std::vector<double> normalize_channel(std::span<const double> values, const ChannelNorm& norm) {
  if (!(norm.std > 0.0)) throw Error(ErrorKind::ZeroStd, "normalization std must be positive");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = (values[i] - norm.mean) / norm.std;
  return out;
}

std::vector<double> denormalize_channel(std::span<const double> values, const ChannelNorm& norm) {
  if (!(norm.std > 0.0)) throw Error(ErrorKind::ZeroStd, "normalization std must be positive");
  std::vector<double> out(values.size());
  for (std::size_t i = 0; i < values.size(); ++i) out[i] = values[i] * norm.std + norm.mean;
  return out;
}

AutoencoderModel init_autoencoder(Channel channel, const Architecture& arch,
                                  const ChannelNorm& norm, const PosEncodingConfig& pe,
                                  std::uint64_t seed) {
  validate(pe);
  if (arch.latent < 1) throw Error(ErrorKind::InvalidInput, "latent width must be >= 1");
  for (int h : arch.hidden) {
    if (h < 1) throw Error(ErrorKind::InvalidInput, "hidden widths must be >= 1");
  }
  const int input = pe.rows * pe.d;

  std::vector<int> widths{input};
  widths.insert(widths.end(), arch.hidden.begin(), arch.hidden.end());
  widths.push_back(arch.latent);
  widths.insert(widths.end(), arch.hidden.rbegin(), arch.hidden.rend());
  widths.push_back(input);

  Rng rng(seed);
  AutoencoderModel model;
  model.channel = channel;
  model.norm = norm;
  model.pe = pe;
  const std::size_t n_encoder = arch.hidden.size() + 1;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    DenseLayer layer;
    const int fan_in = widths[l];
    const int fan_out = widths[l + 1];
    const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    layer.weights.resize(fan_out, fan_in);
    for (int r = 0; r < fan_out; ++r) {
      for (int c = 0; c < fan_in; ++c) layer.weights(r, c) = rng.uniform(-bound, bound);
    }
    layer.biases = Eigen::VectorXd::Zero(fan_out);
    const bool bottleneck_or_output = (l + 1 == n_encoder) || (l + 2 == widths.size());
    layer.activation = bottleneck_or_output ? Activation::Identity : Activation::Relu;
    (l < n_encoder ? model.encoder : model.decoder).push_back(std::move(layer));
  }
  return model;
}

void check_autoencoder(const AutoencoderModel& model) {
  validate(model.pe);
  if (model.pe.rows * model.pe.d != static_cast<int>(kProfileBins)) {
    throw Error(ErrorKind::DimensionMismatch, "positional encoding must cover 200 entries");
  }
  if (model.encoder.empty() || model.decoder.empty()) {
    throw Error(ErrorKind::DimensionMismatch, "encoder and decoder need at least one layer");
  }
  check_layer_stack(model.encoder, "encoder");
  check_layer_stack(model.decoder, "decoder");
  if (model.encoder.front().in_dim() != static_cast<Eigen::Index>(kProfileBins) ||
      model.decoder.back().out_dim() != static_cast<Eigen::Index>(kProfileBins)) {
    throw Error(ErrorKind::DimensionMismatch, "autoencoder must map 200 values to 200 values");
  }
  if (model.encoder.back().out_dim() != static_cast<Eigen::Index>(kLatentDim) ||
      model.decoder.front().in_dim() != static_cast<Eigen::Index>(kLatentDim)) {
    throw Error(ErrorKind::DimensionMismatch, "latent width must be exactly 10");
  }
  if (!(model.norm.std > 0.0) || !std::isfinite(model.norm.mean)) {
    throw Error(ErrorKind::ZeroStd, "model normalization std must be positive");
  }
}

Eigen::RowVectorXd prepare_input(const AutoencoderModel& model, std::span<const double> profile) {
  const Eigen::MatrixXd pe = positional_encoding(model.pe);
  const auto n = static_cast<std::size_t>(pe.size());
  if (profile.size() != n) {
    throw Error(ErrorKind::LengthMismatch, "profile length " + std::to_string(profile.size()) +
                                               " does not match encoding size " +
                                               std::to_string(n));
  }
  require_finite(profile, "profile");
  if (!(model.norm.std > 0.0)) throw Error(ErrorKind::ZeroStd, "normalization std must be positive");
  Eigen::RowVectorXd out(static_cast<Eigen::Index>(n));
  for (int r = 0; r < model.pe.rows; ++r) {
    for (int c = 0; c < model.pe.d; ++c) {
      const auto k = static_cast<std::size_t>(r * model.pe.d + c);
      out(static_cast<Eigen::Index>(k)) = (profile[k] - model.norm.mean) / model.norm.std + pe(r, c);
    }
  }
  return out;
}

LatentVector encode(const AutoencoderModel& model, std::span<const double> profile) {
  check_autoencoder(model);
  const Eigen::MatrixXd z = run_layers(model.encoder, prepare_input(model, profile));
  LatentVector out{};
  for (std::size_t i = 0; i < kLatentDim; ++i) out[i] = z(0, static_cast<Eigen::Index>(i));
  return out;
}

ChannelArray decode(const AutoencoderModel& model, const LatentVector& latent) {
  check_autoencoder(model);
  require_finite(latent, "latent vector");
  Eigen::MatrixXd z(1, static_cast<Eigen::Index>(kLatentDim));
  for (std::size_t i = 0; i < kLatentDim; ++i) z(0, static_cast<Eigen::Index>(i)) = latent[i];
  const Eigen::MatrixXd y = run_layers(model.decoder, z);
  const Eigen::MatrixXd pe = positional_encoding(model.pe);
  ChannelArray out{};
  for (int r = 0; r < model.pe.rows; ++r) {
    for (int c = 0; c < model.pe.d; ++c) {
      const int k = r * model.pe.d + c;
      out[static_cast<std::size_t>(k)] = (y(0, k) - pe(r, c)) * model.norm.std + model.norm.mean;
    }
  }
  return out;
}

Eigen::MatrixXd encode_batch(const AutoencoderModel& model, std::span<const ChannelArray> profiles) {
  check_autoencoder(model);
  // Row at a time: a 1-row product and a block product round differently, and
  // latents must not depend on how many profiles were encoded together.
  const Eigen::MatrixXd inputs = prepare_rows(model, profiles);
  Eigen::MatrixXd out(inputs.rows(), model.encoder.back().out_dim());
  for (Eigen::Index r = 0; r < inputs.rows(); ++r) {
    out.row(r) = run_layers(model.encoder, Eigen::MatrixXd(inputs.row(r)));
  }
  return out;
}

LossAndGradients loss_and_gradients_prepared(const AutoencoderModel& model,
                                             const Eigen::MatrixXd& inputs) {
  if (inputs.rows() == 0) throw Error(ErrorKind::InvalidInput, "empty batch");
  const auto layers = all_layers(model);
  const ForwardTrace trace = forward(layers, inputs);
  const Eigen::MatrixXd residual = trace.inputs.back() - inputs;
  const double count = static_cast<double>(inputs.size());

  LossAndGradients out;
  out.mse = residual.squaredNorm() / count;
  out.gradients.weights.resize(layers.size());
  out.gradients.biases.resize(layers.size());

  Eigen::MatrixXd upstream = (2.0 / count) * residual;
  for (std::size_t l = layers.size(); l-- > 0;) {
    if (layers[l]->activation == Activation::Relu) {
      upstream = upstream.cwiseProduct((trace.pre[l].array() > 0.0).cast<double>().matrix());
    }
    out.gradients.weights[l] = upstream.transpose() * trace.inputs[l];
    out.gradients.biases[l] = upstream.colwise().sum().transpose();
    if (l > 0) upstream = upstream * layers[l]->weights;
  }
  return out;
}

LossAndGradients loss_and_gradients(const AutoencoderModel& model,
                                    std::span<const ChannelArray> batch) {
  if (batch.empty()) throw Error(ErrorKind::InvalidInput, "empty batch");
  return loss_and_gradients_prepared(model, prepare_rows(model, batch));
}

double reconstruction_mse(const AutoencoderModel& model, const Eigen::MatrixXd& inputs) {
  const Eigen::MatrixXd out = run_layers(model.decoder, run_layers(model.encoder, inputs));
  return (out - inputs).squaredNorm() / static_cast<double>(inputs.size());
}

void validate(const TrainConfig& cfg) {
  if (!(cfg.learning_rate > 0.0)) throw Error(ErrorKind::InvalidInput, "learning_rate must be > 0");
  if (cfg.batch_size < 1) throw Error(ErrorKind::InvalidInput, "batch_size must be >= 1");
  if (cfg.patience_epochs < 1) throw Error(ErrorKind::InvalidInput, "patience must be >= 1");
  if (cfg.max_epochs < 1) throw Error(ErrorKind::InvalidInput, "max_epochs must be >= 1");
  if (!(cfg.beta1 >= 0.0 && cfg.beta1 < 1.0) || !(cfg.beta2 >= 0.0 && cfg.beta2 < 1.0)) {
    throw Error(ErrorKind::InvalidInput, "Adam betas must lie in [0, 1)");
  }
  if (!(cfg.epsilon > 0.0)) throw Error(ErrorKind::InvalidInput, "Adam epsilon must be > 0");
}

TrainResult train_autoencoder(std::span<const ChannelArray> train,
                              std::span<const ChannelArray> val, Channel channel,
                              const TrainConfig& cfg, const Architecture& arch,
                              const PosEncodingConfig& pe) {
  validate(cfg);
  if (train.empty() || val.empty()) {
    throw Error(ErrorKind::InvalidInput, "training and validation sets must be nonempty");
  }
  const ChannelNorm norm = fit_channel_norm(train);
  AutoencoderModel model = init_autoencoder(channel, arch, norm, pe, cfg.seed);
  check_autoencoder(model);

  const Eigen::MatrixXd x_train = prepare_rows(model, train);
  const Eigen::MatrixXd x_val = prepare_rows(model, val);

  TrainResult result;
  result.initial_val_mse = reconstruction_mse(model, x_val);
  result.model = model;
  double best_val = result.initial_val_mse;

  AdamState adam = make_adam_state(model);
  Rng rng(derive_seed(cfg.seed, 1));
  std::vector<Eigen::Index> order(static_cast<std::size_t>(x_train.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});

  Eigen::MatrixXd batch;
  for (std::size_t epoch = 0; epoch < cfg.max_epochs; ++epoch) {
    rng.shuffle(order);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < order.size(); start += cfg.batch_size) {
      const std::size_t end = std::min(order.size(), start + cfg.batch_size);
      batch.resize(static_cast<Eigen::Index>(end - start), x_train.cols());
      for (std::size_t i = start; i < end; ++i) {
        batch.row(static_cast<Eigen::Index>(i - start)) = x_train.row(order[i]);
      }
      const LossAndGradients lg = loss_and_gradients_prepared(model, batch);
      if (!std::isfinite(lg.mse)) {
        throw Error(ErrorKind::DivergedLoss,
                    "training loss became non-finite in epoch " + std::to_string(epoch));
      }
      loss_sum += lg.mse * static_cast<double>(end - start);
      adam_step(model, lg.gradients, adam, cfg);
    }
    const double val_mse = reconstruction_mse(model, x_val);
    if (!std::isfinite(val_mse)) {
      throw Error(ErrorKind::DivergedLoss,
                  "validation loss became non-finite in epoch " + std::to_string(epoch));
    }
    result.history.push_back({epoch, loss_sum / static_cast<double>(order.size()), val_mse});

    if (result.history.size() == 1 || val_mse < best_val) {
      best_val = val_mse;
      result.best_epoch = epoch;
      result.model = model;
    } else if (epoch - result.best_epoch >= cfg.patience_epochs) {
      break;
    }
  }
  return result;
}

double rmse(std::span<const double> reconstructed, std::span<const double> original) {
  check_same_length(reconstructed.size(), original.size());
  if (original.empty()) throw Error(ErrorKind::InvalidInput, "rmse of empty arrays");
  double ss = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    const double d = reconstructed[i] - original[i];
    ss += d * d;
  }
  return std::sqrt(ss / static_cast<double>(original.size()));
}

double abs_log_difference(std::span<const double> reconstructed, std::span<const double> original) {
  check_same_length(reconstructed.size(), original.size());
  if (original.empty()) throw Error(ErrorKind::InvalidInput, "log difference of empty arrays");
  double sum = 0.0;
  for (std::size_t i = 0; i < original.size(); ++i) {
    if (!(reconstructed[i] > 0.0) || !(original[i] > 0.0)) {
      throw Error(ErrorKind::NonPositiveValue,
                  "log difference needs positive values (index " + std::to_string(i) + ")");
    }
    sum += std::abs(std::log(reconstructed[i]) - std::log(original[i]));
  }
  return sum / static_cast<double>(original.size());
}

}  // namespace latentcpt
