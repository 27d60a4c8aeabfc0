#include "mplexnet/encoders.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <spdlog/spdlog.h>

#include "mplexnet/diffcore/checkpoint.hpp"
#include "mplexnet/error.hpp"

namespace mplexnet::encoders {

using diffcore::Tensor;

namespace {

Tensor to_tensor(const Matrix& m) { return Tensor::from({m.rows, m.cols}, m.data); }

void require_finite(const Matrix& m, const char* what) {
  for (std::size_t i = 0; i < m.data.size(); ++i)
    if (!std::isfinite(m.data[i]))
      throw ConfigError(std::string(what) + " contains a non-finite value at row " + std::to_string(i / m.cols) +
                        ", column " + std::to_string(i % m.cols) + " (run imputation first)");
}

std::mt19937_64 epoch_rng(std::uint64_t seed, int epoch) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(epoch)};
  return std::mt19937_64(seq);
}

nlohmann::json standardizer_json(const data::Standardizer& s) { return {{"mean", s.mean}, {"stddev", s.stddev}}; }

data::Standardizer standardizer_from(const nlohmann::json& j) {
  data::Standardizer s;
  s.mean = j.at("mean").get<std::vector<double>>();
  s.stddev = j.at("stddev").get<std::vector<double>>();
  return s;
}

nlohmann::json spec_json(const AutoencoderSpec& s) {
  return {{"input_dim", s.input_dim}, {"bottleneck_dim", s.bottleneck_dim}, {"neg_slope", s.neg_slope}};
}

AutoencoderSpec spec_from(const nlohmann::json& j) {
  AutoencoderSpec s;
  s.input_dim = j.at("input_dim").get<std::size_t>();
  s.bottleneck_dim = j.at("bottleneck_dim").get<std::size_t>();
  s.neg_slope = j.at("neg_slope").get<double>();
  return s;
}

}  // namespace

void AutoencoderSpec::validate() const {
  if (bottleneck_dim == 0) throw ConfigError("autoencoder bottleneck must be at least 1");
  if (bottleneck_dim >= input_dim)
    throw ConfigError("autoencoder bottleneck " + std::to_string(bottleneck_dim) + " must be smaller than input " +
                      std::to_string(input_dim));
  if (!(neg_slope >= 0.0 && neg_slope <= 1.0)) throw ConfigError("LeakyReLU slope must lie in [0, 1]");
}

TiedAutoencoder::TiedAutoencoder(const AutoencoderSpec& spec, diffcore::Rng& rng) : spec_(spec) {
  spec.validate();
  params_.add("weight", diffcore::glorot_uniform(spec.input_dim, spec.bottleneck_dim, rng));
  params_.add("enc_bias", Tensor::zeros({spec.bottleneck_dim}, true));
  params_.add("dec_bias", Tensor::zeros({spec.input_dim}, true));
}

Tensor TiedAutoencoder::encode(const Tensor& x) const {
  auto pre = diffcore::affine(x, weight(), enc_bias());
  return spec_.neg_slope == 1.0 ? pre : diffcore::leaky_relu(pre, spec_.neg_slope);
}

Tensor TiedAutoencoder::decode(const Tensor& z) const { return diffcore::affine_transposed(z, weight(), dec_bias()); }

void TiedAutoencoder::encode_row(std::span<const double> x, std::span<double> out) const {
  const auto d = spec_.input_dim, b = spec_.bottleneck_dim;
  if (x.size() != d || out.size() != b)
    throw DimensionError("encode: expected width " + std::to_string(d) + ", got " + std::to_string(x.size()));
  const auto w = weight().values();
  const auto be = enc_bias().values();
  std::fill(out.begin(), out.end(), 0.0);
  for (std::size_t i = 0; i < d; ++i) {
    const double xi = x[i];
    if (xi == 0.0) continue;
    const double* wr = w.data() + i * b;
    for (std::size_t j = 0; j < b; ++j) out[j] += xi * wr[j];
  }
  for (std::size_t j = 0; j < b; ++j) {
    const double v = out[j] + be[j];
    out[j] = v > 0.0 ? v : spec_.neg_slope * v;
  }
}

Matrix TiedAutoencoder::encode(const Matrix& x) const {
  if (x.cols != spec_.input_dim)
    throw DimensionError("encode: expected width " + std::to_string(spec_.input_dim) + ", got " +
                         std::to_string(x.cols));
  Matrix z(x.rows, spec_.bottleneck_dim);
  for (std::size_t r = 0; r < x.rows; ++r) encode_row(x.row(r), z.row(r));
  return z;
}

Matrix TiedAutoencoder::decode(const Matrix& z) const {
  if (z.cols != spec_.bottleneck_dim)
    throw DimensionError("decode: expected width " + std::to_string(spec_.bottleneck_dim) + ", got " +
                         std::to_string(z.cols));
  diffcore::NoGradGuard guard;
  auto out = decode(to_tensor(z));
  return Matrix(z.rows, spec_.input_dim, std::vector<double>(out.values().begin(), out.values().end()));
}

double TiedAutoencoder::reconstruction_mse(const Matrix& x) const {
  diffcore::NoGradGuard guard;
  auto t = to_tensor(x);
  return diffcore::mse_loss(reconstruct(t), t).item();
}

AeTrainResult train_autoencoder(TiedAutoencoder& ae, const Matrix& data, const AeTrainConfig& cfg) {
  if (data.rows < 2) throw ConfigError("autoencoder training needs at least 2 rows");
  if (data.cols != ae.spec().input_dim)
    throw DimensionError("autoencoder input width " + std::to_string(ae.spec().input_dim) + " but data has " +
                         std::to_string(data.cols) + " columns");
  if (cfg.epochs < 1 || cfg.batch_size < 1) throw ConfigError("autoencoder epochs and batch size must be positive");
  require_finite(data, "autoencoder input");

  diffcore::AdamWHyper hyper;
  hyper.lr = cfg.schedule.base_lr;
  hyper.weight_decay = cfg.weight_decay;
  diffcore::AdamW opt(hyper);
  AeTrainResult result;
  result.mse_history.push_back(ae.reconstruction_mse(data));

  std::vector<std::size_t> order(data.rows);
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    auto rng = epoch_rng(cfg.seed, epoch);
    std::shuffle(order.begin(), order.end(), rng);
    const double lr = cfg.schedule.lr(epoch);
    for (std::size_t start = 0; start < data.rows; start += cfg.batch_size) {
      const auto end = std::min(data.rows, start + cfg.batch_size);
      auto batch = to_tensor(data.select_rows(std::span(order).subspan(start, end - start)));
      ae.params().zero_grad();
      auto loss = diffcore::mse_loss(ae.reconstruct(batch), batch);
      if (!std::isfinite(loss.item()))
        throw NumericalError("autoencoder loss became non-finite in epoch " + std::to_string(epoch));
      diffcore::backward(loss);
      opt.step(ae.params(), lr);
    }
    result.mse_history.push_back(ae.reconstruction_mse(data));
    spdlog::debug("autoencoder {}->{} epoch {} mse {:.6g}", ae.spec().input_dim, ae.spec().bottleneck_dim, epoch,
                  result.mse_history.back());
  }
  result.converged = result.final_mse() * cfg.required_reduction <= result.initial_mse();
  if (!result.converged)
    spdlog::warn("autoencoder {}->{} did not converge: mse {:.6g} -> {:.6g}", ae.spec().input_dim,
                 ae.spec().bottleneck_dim, result.initial_mse(), result.final_mse());
  return result;
}

TrainedAutoencoder train_dae(const Matrix& modality, const AutoencoderSpec& spec, const AeTrainConfig& cfg) {
  diffcore::Rng rng(cfg.seed);
  TrainedAutoencoder out{TiedAutoencoder(spec, rng), {}};
  out.result = train_autoencoder(out.model, modality, cfg);
  return out;
}

TrainedAutoencoder train_cae(const Matrix& features, std::size_t k, const AeTrainConfig& cfg, double neg_slope) {
  return train_dae(features, AutoencoderSpec{features.cols, k, neg_slope}, cfg);
}

Matrix EncoderStack::features(const data::Cohort& cohort) const {
  if (cohort.schemas.size() != schemas.size()) throw DimensionError("cohort and encoder stack modality counts differ");
  std::vector<Matrix> codes;
  for (std::size_t m = 0; m < schemas.size(); ++m) {
    auto raw = cohort.modality_matrix(m);
    require_finite(raw, ("modality " + schemas[m].name).c_str());
    codes.push_back(daes[m].encode(input_norm[m].apply(raw)));
  }
  return code_norm.apply(hconcat(codes));
}

std::vector<double> EncoderStack::cae_encode(std::span<const double> x) const {
  std::vector<double> z(num_concepts());
  cae.encode_row(x, z);
  return z;
}

EncoderStack train_encoder_stack(const data::Cohort& cohort, std::span<const std::size_t> train_rows,
                                 const StackTrainConfig& cfg, StackTrainReport* report) {
  if (train_rows.size() < 2) throw ConfigError("encoder training needs at least 2 training rows");
  EncoderStack stack;
  stack.schemas = cohort.schemas;
  std::vector<Matrix> codes;
  for (std::size_t m = 0; m < cohort.schemas.size(); ++m) {
    const auto& s = cohort.schemas[m];
    auto raw = cohort.modality_matrix(m);
    require_finite(raw, ("modality " + s.name).c_str());
    std::vector<bool> passthrough(s.native_dim, s.kind == data::ValueKind::categorical);
    stack.input_norm.push_back(data::Standardizer::fit(raw, train_rows, passthrough));
    auto normed = stack.input_norm.back().apply(raw);
    auto dcfg = cfg.dae;
    dcfg.seed = cfg.dae.seed + 1000003ULL * (m + 1);
    auto trained = train_dae(normed.select_rows(train_rows), AutoencoderSpec{s.native_dim, s.reduced_dim, cfg.neg_slope},
                             dcfg);
    spdlog::info("d-AE {} {}->{}: mse {:.4g} -> {:.4g}{}", s.name, s.native_dim, s.reduced_dim,
                 trained.result.initial_mse(), trained.result.final_mse(), trained.result.converged ? "" : " (not converged)");
    codes.push_back(trained.model.encode(normed));
    stack.daes.push_back(std::move(trained.model));
    if (report) report->dae.push_back(trained.result);
  }
  auto concat = hconcat(codes);
  stack.code_norm = data::Standardizer::fit(concat, train_rows);
  auto x = stack.code_norm.apply(concat);
  auto trained = train_cae(x.select_rows(train_rows), cfg.num_concepts, cfg.cae, cfg.neg_slope);
  spdlog::info("c-AE {}->{}: mse {:.4g} -> {:.4g}{}", x.cols, cfg.num_concepts, trained.result.initial_mse(),
               trained.result.final_mse(), trained.result.converged ? "" : " (not converged)");
  stack.cae = std::move(trained.model);
  if (report) report->cae = trained.result;
  return stack;
}

void save_encoder_stack(const std::filesystem::path& base, const EncoderStack& stack, const std::string& config_hash) {
  if (!stack.trained()) throw ArtifactError("encoder stack is untrained");
  diffcore::Checkpoint ckpt;
  nlohmann::json schemas = nlohmann::json::array(), norms = nlohmann::json::array(), specs = nlohmann::json::array();
  for (std::size_t m = 0; m < stack.schemas.size(); ++m) {
    const auto& s = stack.schemas[m];
    schemas.push_back({{"name", s.name},
                       {"native_dim", s.native_dim},
                       {"reduced_dim", s.reduced_dim},
                       {"kind", s.kind == data::ValueKind::categorical ? "categorical" : "continuous"}});
    norms.push_back(standardizer_json(stack.input_norm[m]));
    specs.push_back(spec_json(stack.daes[m].spec()));
    diffcore::append_parameters(ckpt, stack.daes[m].params(), "dae" + std::to_string(m) + ".");
  }
  diffcore::append_parameters(ckpt, stack.cae.params(), "cae.");
  ckpt.meta["kind"] = "encoder_stack";
  ckpt.meta["config_hash"] = config_hash;
  ckpt.meta["schemas"] = schemas;
  ckpt.meta["input_norm"] = norms;
  ckpt.meta["dae_specs"] = specs;
  ckpt.meta["code_norm"] = standardizer_json(stack.code_norm);
  ckpt.meta["cae_spec"] = spec_json(stack.cae.spec());
  diffcore::save_checkpoint(base, ckpt);
}

EncoderStack load_encoder_stack(const std::filesystem::path& base, std::string* config_hash) {
  auto ckpt = diffcore::load_checkpoint(base);
  if (ckpt.meta.value("kind", std::string()) != "encoder_stack")
    throw ArtifactError(base.string() + " is not an encoder stack checkpoint");
  EncoderStack stack;
  diffcore::Rng rng(0);
  const auto& schemas = ckpt.meta.at("schemas");
  for (std::size_t m = 0; m < schemas.size(); ++m) {
    const auto& j = schemas[m];
    stack.schemas.push_back({j.at("name").get<std::string>(), j.at("native_dim").get<std::size_t>(),
                             j.at("reduced_dim").get<std::size_t>(),
                             j.at("kind").get<std::string>() == "categorical" ? data::ValueKind::categorical
                                                                              : data::ValueKind::continuous});
    stack.input_norm.push_back(standardizer_from(ckpt.meta.at("input_norm")[m]));
    TiedAutoencoder ae(spec_from(ckpt.meta.at("dae_specs")[m]), rng);
    diffcore::restore_parameters(ckpt, ae.params(), "dae" + std::to_string(m) + ".");
    stack.daes.push_back(std::move(ae));
  }
  stack.code_norm = standardizer_from(ckpt.meta.at("code_norm"));
  stack.cae = TiedAutoencoder(spec_from(ckpt.meta.at("cae_spec")), rng);
  diffcore::restore_parameters(ckpt, stack.cae.params(), "cae.");
  if (config_hash) *config_hash = ckpt.meta.value("config_hash", std::string());
  return stack;
}

}  // namespace mplexnet::encoders
