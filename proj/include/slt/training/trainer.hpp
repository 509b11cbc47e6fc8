#pragma once

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <ostream>
#include <vector>

#include "slt/autodiff/optim.hpp"
#include "slt/core/errors.hpp"
#include "slt/core/json_util.hpp"
#include "slt/data/artifacts.hpp"
#include "slt/data/dataset.hpp"
#include "slt/training/losses.hpp"

namespace slt::training {

struct TrainConfig {
  std::size_t batch_size = 128;
  int epochs = 400;
  std::size_t members = 4;        // m
  double transformer_lr = 5e-4;
  double autoencoder_lr = 2.5e-3;
  double lr_decay = 0.9825;       // per epoch
  std::size_t batches_per_epoch = 0;  // 0: one pass over the training windows
  std::size_t val_len = 2000;     // validation tail, in records
  std::size_t val_windows = 256;  // fixed validation windows per evaluation
  bool fair_crps = false;
  std::uint64_t seed = 0;

  void validate() const {
    if (batch_size < 1 || epochs < 1) throw ConfigError("train: batch_size and epochs must be >= 1");
    if (members < 2) throw ConfigError("train.members must be >= 2 for a nonzero ensemble-variation term");
    if (!(transformer_lr > 0.0) || !(autoencoder_lr > 0.0) || !(lr_decay > 0.0))
      throw ConfigError("train: learning rates and lr_decay must be positive");
    if (val_len < 1 || val_windows < 1) throw ConfigError("train: val_len and val_windows must be >= 1");
  }
};

inline void to_json(json& j, const TrainConfig& c) {
  j = json{{"batch_size", c.batch_size},
           {"epochs", c.epochs},
           {"members", c.members},
           {"transformer_lr", c.transformer_lr},
           {"autoencoder_lr", c.autoencoder_lr},
           {"lr_decay", c.lr_decay},
           {"batches_per_epoch", c.batches_per_epoch},
           {"val_len", c.val_len},
           {"val_windows", c.val_windows},
           {"fair_crps", c.fair_crps},
           {"seed", c.seed}};
}

inline void from_json(const json& j, TrainConfig& c) {
  check_keys(j,
             {"batch_size", "epochs", "members", "transformer_lr", "autoencoder_lr", "lr_decay", "batches_per_epoch",
              "val_len", "val_windows", "fair_crps", "seed"},
             "train");
  read_opt(j, "batch_size", c.batch_size, "train");
  read_opt(j, "epochs", c.epochs, "train");
  read_opt(j, "members", c.members, "train");
  read_opt(j, "transformer_lr", c.transformer_lr, "train");
  read_opt(j, "autoencoder_lr", c.autoencoder_lr, "train");
  read_opt(j, "lr_decay", c.lr_decay, "train");
  read_opt(j, "batches_per_epoch", c.batches_per_epoch, "train");
  read_opt(j, "val_len", c.val_len, "train");
  read_opt(j, "val_windows", c.val_windows, "train");
  read_opt(j, "fair_crps", c.fair_crps, "train");
  read_opt(j, "seed", c.seed, "train");
}

struct EpochMetrics {
  int epoch = 0;
  double transformer_lr = 0.0, autoencoder_lr = 0.0;
  LossBreakdown train, val;
};

inline void metrics_csv_header(std::ostream& out) {
  out << "epoch,transformer_lr,autoencoder_lr,train_crps_physical,train_crps_latent,train_mae_identity,"
         "train_spectral_mae,train_total,val_crps_physical,val_crps_latent,val_mae_identity,val_spectral_mae,"
         "val_total\n";
}

inline void metrics_csv_row(std::ostream& out, const EpochMetrics& e) {
  const auto flags = out.flags();
  const auto prec = out.precision(17);
  auto terms = [&](const LossBreakdown& b) {
    out << ',' << b.crps_physical << ',' << b.crps_latent << ',' << b.mae_identity << ',' << b.spectral_mae << ','
        << b.total;
  };
  out << e.epoch << ',' << e.transformer_lr << ',' << e.autoencoder_lr;
  terms(e.train);
  terms(e.val);
  out << '\n';
  out.precision(prec);
  out.flags(flags);
}

struct TrainResult {
  std::vector<EpochMetrics> log;
  int best_epoch = -1;
  double best_val = std::numeric_limits<double>::infinity();
};

struct TrainHooks {
  std::function<void(const EpochMetrics&)> on_epoch;
  std::filesystem::path checkpoint;  // best-validation model, written when non-empty
};

/// Loss over fixed windows with a fixed noise stream, no gradients.
inline LossBreakdown evaluate(const model::SltModel& model, const data::WindowSampler& sampler,
                              const std::vector<std::size_t>& starts, const data::NormStats& norm,
                              const LossOptions& opt, std::uint64_t noise_seed, std::size_t chunk) {
  ad::NoGradGuard guard;
  Rng rng = stream_rng(noise_seed, 13);
  LossBreakdown acc;
  for (std::size_t i = 0; i < starts.size(); i += chunk) {
    const std::vector<std::size_t> part(starts.begin() + long(i),
                                        starts.begin() + long(std::min(starts.size(), i + chunk)));
    auto batch = sampler.gather(part);
    batch.normalize(norm);
    acc += total_loss(model, batch, rng, opt).values().scaled(double(part.size()));
  }
  return acc.scaled(1.0 / double(starts.size()));
}

/// Trains all components jointly with Adam: the autoencoder and transformer
/// groups keep separate learning rates, both decayed once per epoch. The
/// normalization is fitted on `train_rows` and stored in the model. On return
/// the model holds the parameters of the best validation epoch.
inline TrainResult train(model::SltModel& model, const data::RecordView& train_rows,
                         const data::RecordView& val_rows, const TrainConfig& cfg, const TrainHooks& hooks = {}) {
  cfg.validate();
  const std::size_t S = model.history();
  data::WindowSampler sampler(train_rows, S, cfg.seed);
  const data::WindowSampler val_sampler(val_rows, S, cfg.seed);
  if (sampler.valid_starts().size() < cfg.batch_size)
    throw ConfigError("train: " + std::to_string(sampler.valid_starts().size()) +
                      " training windows, fewer than one batch of " + std::to_string(cfg.batch_size));
  const auto val_starts = val_sampler.even_starts(cfg.val_windows);

  const auto norm = data::normalization_stats(train_rows);
  model.norm_mean = norm.mean;
  model.norm_std = norm.std;

  ad::Adam opt({{"autoencoder", model.group(model::ParamGroup::autoencoder), cfg.autoencoder_lr},
                {"transformer", model.group(model::ParamGroup::transformer), cfg.transformer_lr}},
               ad::AdamOptions{0.9, 0.999, 1e-8, cfg.lr_decay});
  const LossOptions lopt{cfg.members, cfg.fair_crps};
  const std::size_t per_epoch = cfg.batches_per_epoch > 0
                                    ? cfg.batches_per_epoch
                                    : std::max<std::size_t>(1, sampler.valid_starts().size() / cfg.batch_size);
  Rng noise = stream_rng(cfg.seed, 11);

  TrainResult res;
  std::vector<std::vector<double>> best;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    EpochMetrics em;
    em.epoch = epoch;
    em.autoencoder_lr = opt.lr(0);
    em.transformer_lr = opt.lr(1);
    for (std::size_t bi = 0; bi < per_epoch; ++bi) {
      auto batch = sampler.sample(cfg.batch_size);
      batch.normalize(norm);
      const auto terms = total_loss(model, batch, noise, lopt);
      const auto v = terms.values();
      if (!v.finite()) throw TrainingDiverged(epoch, long(bi));
      opt.zero_grad();
      ad::backward(terms.total);
      opt.step();
      em.train += v;
    }
    em.train = em.train.scaled(1.0 / double(per_epoch));
    opt.end_epoch();

    em.val = evaluate(model, val_sampler, val_starts, norm, lopt, cfg.seed, cfg.batch_size);
    if (!em.val.finite()) throw TrainingDiverged(epoch, -1);
    if (em.val.total < res.best_val) {
      res.best_val = em.val.total;
      res.best_epoch = epoch;
      best.clear();
      for (const auto& p : model.params()) best.push_back(p.tensor.value());
      if (!hooks.checkpoint.empty())
        data::save_model(hooks.checkpoint, model, json{{"epoch", epoch}, {"val_total", em.val.total}});
    }
    res.log.push_back(em);
    if (hooks.on_epoch) hooks.on_epoch(em);
  }
  for (std::size_t i = 0; i < best.size(); ++i) model.params()[i].tensor.value() = best[i];
  return res;
}

}  // namespace slt::training
