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
#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "audioret/error.hpp"
#include "audioret/model.hpp"
#include "audioret/rng.hpp"

namespace audioret {

namespace detail {
inline void check_same_dim(std::size_t a, std::size_t b, const char* what) {
  if (a != b) fail(what, ": dimension mismatch (", a, " vs ", b, ")");
}
}  // namespace detail

template <typename Real>
Real dot_score(std::span<const Real> a, std::span<const Real> t) {
  detail::check_same_dim(a.size(), t.size(), "dot_score");
  Real acc = 0;
  for (std::size_t j = 0; j < a.size(); ++j) acc += a[j] * t[j];
  return acc;
}

// exp(-||a - t||), in (0, 1], equal to 1 only when a == t.
template <typename Real>
Real exp_neg_euclid(std::span<const Real> a, std::span<const Real> t) {
  detail::check_same_dim(a.size(), t.size(), "exp_neg_euclid");
  Real sq = 0;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const Real d = a[j] - t[j];
    sq += d * d;
  }
  return std::exp(-std::sqrt(sq));
}

template <typename Real>
Real similarity(Scorer scorer, std::span<const Real> a, std::span<const Real> t) {
  return scorer == Scorer::dot ? dot_score(a, t) : exp_neg_euclid(a, t);
}

// Accumulates upstream * d(score)/da into da and upstream * d(score)/dt into
// dt. For exp_neg_euclid the subgradient at a == t is taken as zero.
template <typename Real>
void similarity_backward(Scorer scorer, std::span<const Real> a,
                         std::span<const Real> t, Real upstream,
                         std::span<Real> da, std::span<Real> dt) {
  if (scorer == Scorer::dot) {
    for (std::size_t j = 0; j < a.size(); ++j) {
      da[j] += upstream * t[j];
      dt[j] += upstream * a[j];
    }
    return;
  }
  Real sq = 0;
  for (std::size_t j = 0; j < a.size(); ++j) sq += (a[j] - t[j]) * (a[j] - t[j]);
  const Real dist = std::sqrt(sq);
  if (dist == Real(0)) return;
  const Real d = std::exp(-dist);
  const Real scale = -upstream * d / dist;
  for (std::size_t j = 0; j < a.size(); ++j) {
    const Real g = scale * (a[j] - t[j]);
    da[j] += g;
    dt[j] -= g;
  }
}

inline constexpr double kBceClamp = 1e-7;

// -[y log d + (1 - y) log(1 - d)] with d clamped to [eps, 1 - eps].
inline double bce_match_loss(double d, bool y, double eps = kBceClamp) {
  if (!(d >= 0.0 && d <= 1.0)) fail("bce_match_loss: d = ", d, " outside [0, 1]");
  const double c = std::clamp(d, eps, 1.0 - eps);
  return y ? -std::log(c) : -std::log(1.0 - c);
}

// dL/dd; zero where the clamp is active.
inline double bce_match_loss_grad(double d, bool y, double eps = kBceClamp) {
  if (d < eps || d > 1.0 - eps) return 0.0;
  return y ? -1.0 / d : 1.0 / (1.0 - d);
}

struct TripletTerms {
  double loss = 0.0;
  bool text_active = false;   // margin + s_neg_text - s_pos > 0
  bool audio_active = false;  // margin + s_neg_audio - s_pos > 0
};

// max(0, m + s_neg_text - s_pos) + max(0, m + s_neg_audio - s_pos). A hinge
// sitting exactly at zero is inactive, so its subgradient is zero.
inline TripletTerms triplet_terms(double s_pos, double s_neg_text,
                                  double s_neg_audio, double margin) {
  if (!(margin > 0)) fail("triplet_margin_loss: margin must be positive");
  TripletTerms t;
  const double a = margin + s_neg_text - s_pos;
  const double b = margin + s_neg_audio - s_pos;
  t.text_active = a > 0;
  t.audio_active = b > 0;
  t.loss = (t.text_active ? a : 0.0) + (t.audio_active ? b : 0.0);
  return t;
}

inline double triplet_margin_loss(double s_pos, double s_neg_text,
                                  double s_neg_audio, double margin) {
  return triplet_terms(s_pos, s_neg_text, s_neg_audio, margin).loss;
}

struct BatchItem {
  std::size_t audio_id = 0;
  std::string caption_key;
};

struct Imposters {
  std::size_t text = 0;   // batch position supplying the imposter caption
  std::size_t audio = 0;  // batch position supplying the imposter clip
};

// Two independent uniform draws from the batch positions whose audio differs
// from the anchor's. Captions of the anchor's own clip are true matches and
// never serve as imposters.
inline Imposters sample_imposters(std::span<const BatchItem> batch,
                                  std::size_t anchor, SplitMix64& rng) {
  if (batch.size() < 2) fail("sample_imposters: batch size must be >= 2");
  if (anchor >= batch.size()) fail("sample_imposters: anchor out of range");
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    if (batch[i].audio_id != batch[anchor].audio_id) eligible.push_back(i);
  }
  if (eligible.empty()) {
    fail("sample_imposters: no eligible imposter (all batch items share audio ",
         batch[anchor].audio_id, ")");
  }
  Imposters out;
  out.text = eligible[rng.uniform(eligible.size())];
  out.audio = eligible[rng.uniform(eligible.size())];
  return out;
}

// -(1/T) sum_t ln p_t over the ground-truth token likelihoods.
inline double sequence_cross_entropy(std::span<const double> probs) {
  if (probs.empty()) fail("sequence_cross_entropy: empty sequence");
  double acc = 0.0;
  for (std::size_t t = 0; t < probs.size(); ++t) {
    const double p = probs[t];
    if (!(p > 0.0 && p <= 1.0)) {
      fail("sequence_cross_entropy: probability ", p, " at step ", t,
           " outside (0, 1]");
    }
    acc -= std::log(p);
  }
  return acc / static_cast<double>(probs.size());
}

}  // namespace audioret
