/*
 * Copyright 2026 The audioret Authors.
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "audioret/corpus.hpp"
#include "audioret/error.hpp"
#include "audioret/losses.hpp"
#include "audioret/model.hpp"
#include "audioret/retrieval.hpp"
#include "audioret/rng.hpp"

namespace audioret {

// ---------------------------------------------------------------------------
// Adam

template <typename Real>
struct AdamState {
  AdamHyper hyper;
  std::uint64_t step = 0;
  std::vector<std::vector<Real>> m;
  std::vector<std::vector<Real>> v;
};

// One bias-corrected Adam update of every tensor from its grad slot.
template <typename Real>
void adam_step(ParamSet<Real>& params, AdamState<Real>& state, double lr) {
  if (state.m.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      state.m.emplace_back(params[i].size(), Real(0));
      state.v.emplace_back(params[i].size(), Real(0));
    }
  }
  if (state.m.size() != params.size()) fail("adam_step: state/parameter mismatch");
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (state.m[i].size() != params[i].size()) {
      fail("adam_step: moment buffer shape mismatch for '", params.name(i), "'");
    }
    auto g = params[i].grad();
    for (std::size_t k = 0; k < g.size(); ++k) {
      if (!std::isfinite(g[k])) {
        fail("adam_step: non-finite gradient in '", params.name(i), "' at ", k);
      }
    }
  }
  ++state.step;
  const auto& h = state.hyper;
  const double c1 = 1.0 - std::pow(h.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(h.beta2, static_cast<double>(state.step));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params[i].data();
    auto g = params[i].grad();
    auto& m = state.m[i];
    auto& v = state.v[i];
    for (std::size_t k = 0; k < theta.size(); ++k) {
      m[k] = static_cast<Real>(h.beta1 * m[k] + (1.0 - h.beta1) * g[k]);
      v[k] = static_cast<Real>(h.beta2 * v[k] + (1.0 - h.beta2) * g[k] * g[k]);
      const double m_hat = m[k] / c1;
      const double v_hat = v[k] / c2;
      theta[k] = static_cast<Real>(theta[k] - lr * m_hat / (std::sqrt(v_hat) + h.eps));
    }
  }
}

// ---------------------------------------------------------------------------
// Reduce-on-plateau (maximizing) and early stopping

struct PlateauState {
  double factor = 0.5;
  int patience = 5;
  double min_lr = 1e-6;
  double threshold = 1e-6;
  double best = -std::numeric_limits<double>::infinity();
  int epochs_since_improve = 0;

  void validate() const {
    if (!(factor > 0 && factor < 1)) fail("plateau.factor must lie in (0, 1)");
    if (patience < 1) fail("plateau.patience must be >= 1");
    if (!(min_lr >= 0)) fail("plateau.min_lr must be >= 0");
  }
};

inline double plateau_update(PlateauState& s, double metric, double lr) {
  if (metric > s.best + s.threshold) {
    s.best = metric;
    s.epochs_since_improve = 0;
    return lr;
  }
  if (++s.epochs_since_improve >= s.patience) {
    s.epochs_since_improve = 0;
    return std::max(s.min_lr, lr * s.factor);
  }
  return lr;
}

// True iff the best value (earliest on ties) lies more than `patience`
// epochs before the latest one.
inline bool early_stop_check(std::span<const double> history, int patience) {
  if (history.empty()) return false;
  const auto best = std::max_element(history.begin(), history.end());
  const auto since = static_cast<long>(history.end() - best) - 1;
  return since > patience;
}

// ---------------------------------------------------------------------------
// Training

struct TrainConfig {
  int epochs = 50;
  std::size_t batch_size = 32;
  std::uint64_t seed = 0;
  int early_stop_patience = 10;
  PlateauState plateau;

  void validate() const {
    if (epochs < 1) fail("train.epochs must be >= 1");
    if (batch_size < 2) {
      fail("train.batch_size must be >= 2 (imposters come from the batch)");
    }
    if (early_stop_patience < 1) fail("train.early_stop_patience must be >= 1");
    plateau.validate();
  }
};

struct EpochLog {
  int epoch = 0;  // 1-based
  double train_loss = 0.0;
  RetrievalReport validation;
  double lr = 0.0;  // rate used during the epoch
};

inline std::string epoch_log_header() {
  return "epoch,train_loss,val_R1,val_R5,val_R10,val_mAP10,lr";
}

inline std::string format_epoch_log_row(const EpochLog& e) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%d,%.9g,%.6f,%.6f,%.6f,%.6f,%.9g", e.epoch,
                e.train_loss, e.validation.R1, e.validation.R5,
                e.validation.R10, e.validation.mAP10, e.lr);
  return buf;
}

inline std::string format_epoch_log(const std::vector<EpochLog>& log) {
  std::string out = epoch_log_header() + "\n";
  for (const auto& e : log) out += format_epoch_log_row(e) + "\n";
  return out;
}

struct TrainResult {
  Checkpoint checkpoint;
  std::vector<EpochLog> log;
  OovStats oov;
  std::size_t skipped_batches = 0;  // batches holding a single clip
};

namespace detail {

inline void check_split_dims(const SplitData& split, const ModelConfig& config,
                             const TextTables& tables, const char* which) {
  for (std::size_t i = 0; i < split.features.size(); ++i) {
    if (split.features[i].cols != config.input_dim) {
      fail(which, " clip '", split.manifest.items[i].file_name,
           "': feature dimension ", split.features[i].cols,
           " != model input_dim ", config.input_dim);
    }
  }
  if (config.text_mode == TextMode::word_average) {
    if (!tables.words) fail("word_average mode needs word embeddings");
    if (tables.words->dim != config.text_input_dim()) {
      fail("word embedding dim ", tables.words->dim, " != model text_dim ",
           config.text_input_dim());
    }
  } else {
    if (!tables.sentences) fail("sentence_table mode needs caption embeddings");
    if (tables.sentences->dim != config.text_input_dim()) {
      fail("caption embedding dim ", tables.sentences->dim,
           " != model text_dim ", config.text_input_dim());
    }
  }
}

// Contiguous batches of the shuffled order; a trailing batch of one item is
// folded into its predecessor.
inline std::vector<std::pair<std::size_t, std::size_t>> make_batches(
    std::size_t n, std::size_t batch_size) {
  std::vector<std::pair<std::size_t, std::size_t>> out;
  for (std::size_t start = 0; start < n; start += batch_size) {
    out.emplace_back(start, std::min(n, start + batch_size));
  }
  if (out.size() > 1 && out.back().second - out.back().first < 2) {
    const auto last = out.back();
    out.pop_back();
    out.back().second = last.second;
  }
  return out;
}

}  // namespace detail

// One gradient step's worth of loss over a batch of (clip, caption) pairs.
// Returns the mean loss over anchors; gradients are left in the model's grad
// slots (zeroed first). Batches with a single distinct clip have no
// imposters and contribute nothing (returns nullopt).
inline std::optional<double> batch_loss_and_gradients(
    CrossModalModel<float>& model, const SplitData& split,
    const std::vector<std::vector<float>>& base_text,
    std::span<const std::size_t> batch_captions, SplitMix64& rng) {
  const auto& cfg = model.config();
  model.params().zero_grad();

  std::vector<BatchItem> items;
  std::map<std::size_t, std::size_t> slot_of_audio;
  std::vector<std::size_t> slot_audio;
  for (auto c : batch_captions) {
    const auto audio = split.caption_audio[c];
    items.push_back({audio, split.captions[c].key()});
    if (slot_of_audio.emplace(audio, slot_audio.size()).second) {
      slot_audio.push_back(audio);
    }
  }
  if (slot_audio.size() < 2) return std::nullopt;

  std::vector<CrossModalModel<float>::AudioTape> audio_tapes(slot_audio.size());
  std::vector<std::vector<float>> audio_emb(slot_audio.size());
  for (std::size_t s = 0; s < slot_audio.size(); ++s) {
    audio_emb[s] = model.encode_audio(split.features[slot_audio[s]], &audio_tapes[s]);
  }
  std::vector<CrossModalModel<float>::TextTape> text_tapes(items.size());
  std::vector<std::vector<float>> text_emb(items.size());
  for (std::size_t i = 0; i < items.size(); ++i) {
    text_emb[i] = model.project_text(base_text[batch_captions[i]], &text_tapes[i]);
  }

  const std::size_t D = cfg.score_dim();
  std::vector<std::vector<float>> d_audio(slot_audio.size(), std::vector<float>(D, 0.f));
  std::vector<std::vector<float>> d_text(items.size(), std::vector<float>(D, 0.f));
  const float inv = 1.0f / static_cast<float>(items.size());
  double total = 0.0;

  auto slot = [&](std::size_t item) { return slot_of_audio.at(items[item].audio_id); };
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto imp = sample_imposters(items, i, rng);
    const auto ai = slot(i);
    if (cfg.loss == LossKind::triplet) {
      const auto aj = slot(imp.audio);
      const double s_pos = similarity<float>(cfg.scorer, audio_emb[ai], text_emb[i]);
      const double s_nt = similarity<float>(cfg.scorer, audio_emb[ai], text_emb[imp.text]);
      const double s_na = similarity<float>(cfg.scorer, audio_emb[aj], text_emb[i]);
      const auto terms = triplet_terms(s_pos, s_nt, s_na, cfg.margin);
      total += terms.loss;
      const int active = static_cast<int>(terms.text_active) + static_cast<int>(terms.audio_active);
      if (active > 0) {
        similarity_backward<float>(cfg.scorer, audio_emb[ai], text_emb[i],
                                   -inv * static_cast<float>(active), d_audio[ai], d_text[i]);
      }
      if (terms.text_active) {
        similarity_backward<float>(cfg.scorer, audio_emb[ai], text_emb[imp.text], inv,
                                   d_audio[ai], d_text[imp.text]);
      }
      if (terms.audio_active) {
        similarity_backward<float>(cfg.scorer, audio_emb[aj], text_emb[i], inv,
                                   d_audio[aj], d_text[i]);
      }
    } else {
      // BCE on exp(-distance): the matching pair (y = 1) plus one sampled
      // imposter caption (y = 0).
      const double d_pos = exp_neg_euclid<float>(audio_emb[ai], text_emb[i]);
      const double d_neg = exp_neg_euclid<float>(audio_emb[ai], text_emb[imp.text]);
      total += bce_match_loss(std::clamp(d_pos, 0.0, 1.0), true) +
               bce_match_loss(std::clamp(d_neg, 0.0, 1.0), false);
      similarity_backward<float>(
          Scorer::exp_neg_euclid, audio_emb[ai], text_emb[i],
          inv * static_cast<float>(bce_match_loss_grad(d_pos, true)), d_audio[ai], d_text[i]);
      similarity_backward<float>(
          Scorer::exp_neg_euclid, audio_emb[ai], text_emb[imp.text],
          inv * static_cast<float>(bce_match_loss_grad(d_neg, false)), d_audio[ai],
          d_text[imp.text]);
    }
  }
  const double loss = total / static_cast<double>(items.size());
  if (!std::isfinite(loss)) fail("non-finite training loss");
  if (loss == 0.0) return loss;

  for (std::size_t s = 0; s < slot_audio.size(); ++s) {
    model.backward_audio(audio_tapes[s], d_audio[s]);
  }
  if (cfg.has_text_projection()) {
    for (std::size_t i = 0; i < items.size(); ++i) {
      model.backward_text(text_tapes[i], d_text[i]);
    }
  }
  return loss;
}

// Seeded, single-threaded, bit-deterministic training. Validation runs every
// epoch on `validation` (or the training split when null); the returned
// checkpoint holds the first epoch attaining the best validation mAP10.
inline TrainResult train(const SplitData& train_split, const SplitData* validation,
                         const TextTables& tables, const ModelConfig& config,
                         const TrainConfig& train_config,
                         const std::function<void(const EpochLog&)>& on_epoch = {}) {
  config.validate();
  train_config.validate();
  detail::check_split_dims(train_split, config, tables, "training");
  if (validation) detail::check_split_dims(*validation, config, tables, "validation");
  if (train_split.captions.size() < 2) fail("training split needs at least 2 captions");
  const SplitData& val = validation ? *validation : train_split;

  auto model = CrossModalModel<float>::initialized(config);
  TrainResult result;
  std::vector<std::vector<float>> base_text;
  base_text.reserve(train_split.captions.size());
  for (const auto& c : train_split.captions) {
    base_text.push_back(base_text_embedding(c, config.text_mode, tables, &result.oov));
  }

  SplitMix64 rng(train_config.seed);
  AdamState<float> adam;
  adam.hyper = config.optimizer;
  PlateauState plateau = train_config.plateau;
  double lr = config.optimizer.lr;
  std::vector<double> history;
  double best = -std::numeric_limits<double>::infinity();
  ParamSet<float> best_params = model.params();
  int best_epoch = 0;

  std::vector<std::size_t> order(train_split.captions.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (int epoch = 1; epoch <= train_config.epochs; ++epoch) {
    for (std::size_t i = order.size() - 1; i > 0; --i) {
      std::swap(order[i], order[rng.uniform(i + 1)]);
    }
    double loss_sum = 0.0;
    std::size_t loss_items = 0;
    for (const auto& [begin, end] : detail::make_batches(order.size(), train_config.batch_size)) {
      const std::span<const std::size_t> batch(order.data() + begin, end - begin);
      const auto loss = batch_loss_and_gradients(model, train_split, base_text, batch, rng);
      if (!loss) {
        ++result.skipped_batches;
        continue;
      }
      if (!std::isfinite(*loss)) fail("epoch ", epoch, ": non-finite training loss");
      loss_sum += *loss * static_cast<double>(batch.size());
      loss_items += batch.size();
      // A zero-loss batch carries no gradient; the optimizer is not stepped,
      // so momentum from earlier batches cannot move the parameters.
      if (*loss > 0.0) adam_step(model.params(), adam, lr);
    }

    EpochLog row;
    row.epoch = epoch;
    row.train_loss = loss_items ? loss_sum / static_cast<double>(loss_items) : 0.0;
    OovStats val_oov;
    row.validation = evaluate_retrieval(model, val, tables, &val_oov);
    row.lr = lr;
    result.log.push_back(row);
    if (on_epoch) on_epoch(row);

    history.push_back(row.validation.mAP10);
    if (row.validation.mAP10 > best) {
      best = row.validation.mAP10;
      best_epoch = epoch;
      best_params = model.params();
    }
    lr = plateau_update(plateau, row.validation.mAP10, lr);
    if (early_stop_check(history, train_config.early_stop_patience)) break;
  }

  for (std::size_t i = 0; i < best_params.size(); ++i) best_params[i].drop_grad();
  result.checkpoint.config = config;
  result.checkpoint.params = std::move(best_params);
  result.checkpoint.epoch = best_epoch;
  result.checkpoint.best_validation_mAP10 = best;
  return result;
}

}  // namespace audioret
