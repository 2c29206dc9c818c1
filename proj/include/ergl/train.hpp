#pragma once

#include <chrono>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "ergl/checkpoint.hpp"
#include "ergl/dataset.hpp"
#include "ergl/losses.hpp"
#include "ergl/optim.hpp"

namespace ergl {

struct EpochReport {
  int epoch = 0;
  double l_event = 0;
  double l_scene = 0;
  double l_total = 0;
  double scene_accuracy = 0;  // validation split
  double wall_time_s = 0;

  std::string to_json() const {
    nlohmann::json j = {{"epoch", epoch},          {"l_event", l_event},
                        {"l_scene", l_scene},      {"l_total", l_total},
                        {"scene_accuracy", scene_accuracy}, {"wall_time_s", wall_time_s}};
    return j.dump();
  }
};

struct EvalResult {
  double accuracy = 0;
  std::vector<std::vector<int64_t>> confusion;  // rows: true label, cols: predicted
  int64_t total = 0;
};

inline EvalResult tally_predictions(const std::vector<int64_t>& predicted,
                                    const std::vector<int64_t>& truth, int classes) {
  if (predicted.size() != truth.size())
    throw ContractError("tally: " + std::to_string(predicted.size()) + " predictions for " +
                        std::to_string(truth.size()) + " labels");
  EvalResult r;
  r.confusion.assign(static_cast<size_t>(classes), std::vector<int64_t>(static_cast<size_t>(classes), 0));
  int64_t hits = 0;
  for (size_t i = 0; i < truth.size(); ++i) {
    r.confusion[static_cast<size_t>(truth[i])][static_cast<size_t>(predicted[i])]++;
    if (predicted[i] == truth[i]) ++hits;
  }
  r.total = static_cast<int64_t>(truth.size());
  r.accuracy = r.total ? static_cast<double>(hits) / static_cast<double>(r.total) : 0.0;
  return r;
}

// [B, T, mel] batch assembled from the dataset's float features.
template <typename S>
ad::Tensor<S> feature_batch(const LoadedDataset& data, const std::vector<int>& ids) {
  int64_t nb = static_cast<int64_t>(ids.size());
  int64_t t = data.frames;
  int64_t mel = data.clips[static_cast<size_t>(ids[0])].feature.mel_bins;
  ad::Tensor<S> out({nb, t, mel});
  for (int64_t b = 0; b < nb; ++b) {
    const auto& f = data.clips[static_cast<size_t>(ids[static_cast<size_t>(b)])].feature;
    for (size_t k = 0; k < f.values.size(); ++k)
      out.data()[static_cast<size_t>(b * t * mel) + k] = static_cast<S>(f.values[k]);
  }
  return out;
}

template <typename S>
EvalResult evaluate_model(ErglModel<S>& model, const LoadedDataset& data,
                          const std::vector<int>& idx, int64_t batch_size = 32) {
  if (idx.empty()) throw InputError("evaluate: empty split");
  std::vector<int64_t> predicted, truth;
  for (size_t pos = 0; pos < idx.size(); pos += static_cast<size_t>(batch_size)) {
    std::vector<int> chunk(idx.begin() + static_cast<std::ptrdiff_t>(pos),
                           idx.begin() + static_cast<std::ptrdiff_t>(
                                             std::min(pos + static_cast<size_t>(batch_size), idx.size())));
    auto features = feature_batch<S>(data, chunk);
    auto fwd = model.forward(features, /*training=*/false);
    for (size_t k = 0; k < chunk.size(); ++k) {
      predicted.push_back(fwd.scene.predicted[k]);
      truth.push_back(data.clips[static_cast<size_t>(chunk[k])].scene_index);
    }
  }
  return tally_predictions(predicted, truth, static_cast<int>(data.scene_labels.size()));
}

struct TrainOutcome {
  Checkpoint checkpoint;  // parameters of the best-validation epoch
  std::vector<EpochReport> reports;
  double best_val_accuracy = -1;
  int best_epoch = -1;
};

namespace detail {

template <typename S>
TrainOutcome train_impl(const TrainConfig& cfg, const LoadedDataset& data, std::ostream* jsonl,
                        bool save_optimizer) {
  cfg.validate();
  if (static_cast<int>(data.scene_labels.size()) != cfg.model.scene_classes)
    throw ConfigError("train: dataset has " + std::to_string(data.scene_labels.size()) +
                      " scene labels, model expects " + std::to_string(cfg.model.scene_classes));
  if (data.vocab.n() != cfg.model.n_events)
    throw ConfigError("train: vocabulary of " + std::to_string(data.vocab.n()) +
                      " events does not match n=" + std::to_string(cfg.model.n_events));
  if (data.train_idx.empty()) throw InputError("train: empty training split");

  Rng init_rng(cfg.seed);
  ErglModel<S> model(cfg.model, init_rng);
  auto reg = model.registry();
  AdamW<S> opt(reg.params, cfg.lr, cfg.beta1, cfg.beta2, cfg.adam_eps, cfg.weight_decay);
  opt.set_freeze(cfg.freeze);

  Rng shuffle_rng(cfg.seed ^ 0x5DEECE66Dull);
  const auto& val_idx = data.val_idx.empty() ? data.train_idx : data.val_idx;

  TrainOutcome out;
  std::vector<std::vector<S>> best_params, best_buffers;

  auto lambda1 = static_cast<S>(cfg.lambda1);
  auto lambda2 = static_cast<S>(cfg.lambda2);

  for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
    auto start = std::chrono::steady_clock::now();
    auto order = data.train_idx;
    shuffle_rng.shuffle(order);

    double sum_le = 0, sum_ls = 0;
    int64_t seen = 0;
    for (size_t pos = 0; pos < order.size(); pos += static_cast<size_t>(cfg.batch_size)) {
      std::vector<int> chunk(order.begin() + static_cast<std::ptrdiff_t>(pos),
                             order.begin() + static_cast<std::ptrdiff_t>(std::min(
                                                 pos + static_cast<size_t>(cfg.batch_size),
                                                 order.size())));
      // a trailing singleton cannot be batch-normalized; fold it away
      if (chunk.size() == 1 && order.size() > 1) break;

      auto features = feature_batch<S>(data, chunk);
      auto nb = static_cast<int64_t>(chunk.size());
      ad::Tensor<S> targets({nb, static_cast<int64_t>(cfg.model.n_events)});
      std::vector<int64_t> labels(chunk.size());
      for (int64_t b = 0; b < nb; ++b) {
        const auto& clip = data.clips[static_cast<size_t>(chunk[static_cast<size_t>(b)])];
        labels[static_cast<size_t>(b)] = clip.scene_index;
        for (int e = 0; e < cfg.model.n_events; ++e)
          targets.data()[b * cfg.model.n_events + e] = static_cast<S>(clip.event_target[static_cast<size_t>(e)]);
      }

      ad::Tape<S> tape;
      {
        ad::TapeScope<S> scope(tape);
        auto fwd = model.forward(features, /*training=*/true);
        auto le = event_loss(fwd.event_probs, targets);
        auto ls = scene_loss(fwd.scene.logits, labels);
        auto loss = combined_loss(le, ls, lambda1, lambda2);
        double lv = static_cast<double>(loss.item());
        if (!std::isfinite(lv))
          throw NumericError("train: non-finite loss at epoch " + std::to_string(epoch) +
                             ", batch starting at sample " + std::to_string(pos));
        sum_le += static_cast<double>(le.item()) * static_cast<double>(nb);
        sum_ls += static_cast<double>(ls.item()) * static_cast<double>(nb);
        seen += nb;
        tape.backward(loss);
      }
      opt.step();
      opt.zero_grad();
    }

    EpochReport rep;
    rep.epoch = epoch;
    rep.l_event = sum_le / static_cast<double>(seen);
    rep.l_scene = sum_ls / static_cast<double>(seen);
    rep.l_total = cfg.lambda1 * rep.l_event + cfg.lambda2 * rep.l_scene;
    rep.scene_accuracy = evaluate_model(model, data, val_idx).accuracy;
    rep.wall_time_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    out.reports.push_back(rep);
    if (jsonl) (*jsonl) << rep.to_json() << "\n" << std::flush;

    if (rep.scene_accuracy > out.best_val_accuracy) {
      out.best_val_accuracy = rep.scene_accuracy;
      out.best_epoch = epoch;
      best_params.clear();
      best_buffers.clear();
      for (const auto& p : reg.params) best_params.push_back(p.tensor.values());
      for (const auto& b : reg.buffers) best_buffers.push_back(b.tensor.values());
    }
  }

  // restore the best-validation snapshot before persisting
  for (size_t i = 0; i < reg.params.size(); ++i) reg.params[i].tensor.values() = best_params[i];
  for (size_t i = 0; i < reg.buffers.size(); ++i) reg.buffers[i].tensor.values() = best_buffers[i];

  out.checkpoint = Checkpoint::from_model(model, cfg, data.vocab, data.scene_labels);
  if (save_optimizer) {
    out.checkpoint.has_optimizer = true;
    const auto& ms = opt.first_moments();
    const auto& vs = opt.second_moments();
    for (size_t i = 0; i < reg.params.size(); ++i) {
      OptimSlot slot;
      slot.name = reg.params[i].name;
      slot.step = opt.steps()[i];
      slot.m.assign(ms[i].begin(), ms[i].end());
      slot.v.assign(vs[i].begin(), vs[i].end());
      out.checkpoint.optimizer.push_back(std::move(slot));
    }
  }
  return out;
}

}  // namespace detail

// Runs the training loop at the configured precision; reports stream to jsonl
// as one JSON object per epoch.
inline TrainOutcome train(const TrainConfig& cfg, const LoadedDataset& data,
                          std::ostream* jsonl = nullptr, bool save_optimizer = false) {
  if (cfg.precision == "f64") return detail::train_impl<double>(cfg, data, jsonl, save_optimizer);
  return detail::train_impl<float>(cfg, data, jsonl, save_optimizer);
}

// Evaluation entry point for a persisted checkpoint.
inline EvalResult evaluate_checkpoint(const Checkpoint& ck, const LoadedDataset& data,
                                      const std::string& split) {
  const auto& idx = data.split_indices(split);
  if (idx.empty()) throw InputError("evaluate: split '" + split + "' is empty");
  if (ck.config.precision == "f64") {
    auto model = ck.instantiate<double>();
    return evaluate_model(model, data, idx);
  }
  auto model = ck.instantiate<float>();
  return evaluate_model(model, data, idx);
}

}  // namespace ergl
