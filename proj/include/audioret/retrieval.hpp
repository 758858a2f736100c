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
#include <cstdio>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "audioret/corpus.hpp"
#include "audioret/error.hpp"
#include "audioret/losses.hpp"
#include "audioret/model.hpp"

namespace audioret {

// Q x N similarity scores, one row per text query.
struct ScoreMatrix {
  std::size_t queries = 0;
  std::size_t audio = 0;
  std::vector<double> scores;  // row-major
  std::vector<std::string> query_keys;
  std::vector<std::string> audio_ids;
  std::vector<std::size_t> ground_truth;  // per query, index into audio

  std::span<const double> row(std::size_t q) const {
    return {scores.data() + q * audio, audio};
  }
  double at(std::size_t q, std::size_t n) const { return scores[q * audio + n]; }
};

template <typename Real>
ScoreMatrix score_all(const std::vector<std::vector<Real>>& text_embs,
                      const std::vector<std::vector<Real>>& audio_embs,
                      Scorer scorer) {
  ScoreMatrix m;
  m.queries = text_embs.size();
  m.audio = audio_embs.size();
  m.scores.resize(m.queries * m.audio);
  for (std::size_t q = 0; q < m.queries; ++q) {
    for (std::size_t n = 0; n < m.audio; ++n) {
      if (text_embs[q].size() != audio_embs[n].size()) {
        fail("score_all: text dim ", text_embs[q].size(), " != audio dim ",
             audio_embs[n].size());
      }
      m.scores[q * m.audio + n] = static_cast<double>(similarity<Real>(
          scorer, audio_embs[n], text_embs[q]));
    }
  }
  return m;
}

namespace detail {
inline void check_finite_row(std::span<const double> row) {
  for (double v : row) {
    if (std::isnan(v)) fail("rank_row: NaN score");
  }
}
}  // namespace detail

// Indices by descending score; ties go to the lower audio index.
inline std::vector<std::size_t> rank_row(std::span<const double> row) {
  detail::check_finite_row(row);
  std::vector<std::size_t> order(row.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return row[a] > row[b];
  });
  return order;
}

// 1-based position of `target` under the rank_row order, in O(N).
inline std::size_t rank_of(std::span<const double> row, std::size_t target) {
  detail::check_finite_row(row);
  const double s = row[target];
  std::size_t ahead = 0;
  for (std::size_t n = 0; n < row.size(); ++n) {
    if (row[n] > s || (row[n] == s && n < target)) ++ahead;
  }
  return ahead + 1;
}

inline std::vector<std::size_t> ground_truth_ranks(const ScoreMatrix& m) {
  if (m.ground_truth.size() != m.queries) {
    fail("score matrix has ", m.queries, " queries but ",
         m.ground_truth.size(), " ground-truth entries");
  }
  std::vector<std::size_t> ranks(m.queries);
  for (std::size_t q = 0; q < m.queries; ++q) {
    if (m.ground_truth[q] >= m.audio) fail("ground truth out of range for query ", q);
    ranks[q] = rank_of(m.row(q), m.ground_truth[q]);
  }
  return ranks;
}

inline double recall_at_k(const ScoreMatrix& m, std::size_t k) {
  if (k < 1 || k > m.audio) fail("recall_at_k: k = ", k, " outside [1, ", m.audio, "]");
  if (m.queries == 0) return 0.0;
  std::size_t hits = 0;
  for (auto r : ground_truth_ranks(m)) hits += r <= k ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(m.queries);
}

// One relevant item per query, so AP@10 is 1/rank within the cutoff, else 0.
inline double map_at_10(const ScoreMatrix& m) {
  if (m.audio < 1) fail("map_at_10: no audio items");
  if (m.queries == 0) return 0.0;
  double acc = 0.0;
  for (auto r : ground_truth_ranks(m)) {
    if (r <= 10) acc += 1.0 / static_cast<double>(r);
  }
  return acc / static_cast<double>(m.queries);
}

struct RetrievalReport {
  double R1 = 0, R5 = 0, R10 = 0, mAP10 = 0;
  std::size_t queries = 0;
  std::size_t audio = 0;
};

// Cutoffs larger than N are evaluated at N (every ground truth is found).
inline RetrievalReport retrieval_report(const ScoreMatrix& m) {
  RetrievalReport r;
  r.queries = m.queries;
  r.audio = m.audio;
  const auto ranks = ground_truth_ranks(m);
  if (ranks.empty()) return r;
  for (auto rank : ranks) {
    r.R1 += rank <= 1;
    r.R5 += rank <= 5;
    r.R10 += rank <= 10;
    if (rank <= 10) r.mAP10 += 1.0 / static_cast<double>(rank);
  }
  const auto q = static_cast<double>(ranks.size());
  r.R1 /= q;
  r.R5 /= q;
  r.R10 /= q;
  r.mAP10 /= q;
  return r;
}

inline std::string format_report(const RetrievalReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf,
                "{\"R1\":%.4f,\"R5\":%.4f,\"R10\":%.4f,\"mAP10\":%.4f,"
                "\"queries\":%zu,\"audio\":%zu}",
                r.R1, r.R5, r.R10, r.mAP10, r.queries, r.audio);
  return buf;
}

// ---------------------------------------------------------------------------
// Model-level evaluation.

template <typename Real>
std::vector<std::vector<Real>> embed_split_audio(const CrossModalModel<Real>& model,
                                                 const SplitData& split) {
  std::vector<std::vector<Real>> out;
  out.reserve(split.features.size());
  for (const auto& f : split.features) out.push_back(model.encode_audio(f));
  return out;
}

// Every caption is a query whose single relevant item is its own clip.
template <typename Real>
ScoreMatrix split_score_matrix(const CrossModalModel<Real>& model,
                               const SplitData& split, const TextTables& tables,
                               OovStats* stats = nullptr) {
  const auto audio = embed_split_audio(model, split);
  std::vector<std::vector<Real>> text;
  text.reserve(split.captions.size());
  for (const auto& c : split.captions) {
    text.push_back(embed_text(c, model, tables, stats));
  }
  auto m = score_all(text, audio, model.config().scorer);
  for (const auto& c : split.captions) m.query_keys.push_back(c.key());
  for (const auto& item : split.manifest.items) m.audio_ids.push_back(item.file_name);
  m.ground_truth = split.caption_audio;
  return m;
}

template <typename Real>
RetrievalReport evaluate_retrieval(const CrossModalModel<Real>& model,
                                   const SplitData& split,
                                   const TextTables& tables,
                                   OovStats* stats = nullptr) {
  return retrieval_report(split_score_matrix(model, split, tables, stats));
}

struct RankedClip {
  std::string file_name;
  double score = 0.0;
};

// word_average mode embeds the normalized query text; sentence_table mode
// needs the caller to supply the query's sentence vector.
template <typename Real>
std::vector<RankedClip> rank_query(const CrossModalModel<Real>& model,
                                   std::string_view query_text,
                                   const SplitData& split,
                                   const TextTables& tables, std::size_t top_k,
                                   const std::optional<std::vector<float>>&
                                       query_vector = std::nullopt) {
  CaptionRecord query;
  query.file_name = "<query>";
  query.raw_text = std::string(query_text);
  query.tokens = normalize_caption(query_text);
  if (query.tokens.empty()) fail("query is empty after normalization");
  const std::size_t n = split.features.size();
  if (top_k < 1 || top_k > n) fail("top_k = ", top_k, " outside [1, ", n, "]");

  std::vector<Real> text;
  if (model.config().text_mode == TextMode::sentence_table) {
    if (!query_vector) {
      fail("sentence_table mode needs a precomputed query vector");
    }
    text.assign(query_vector->begin(), query_vector->end());
    text = model.project_text(text);
  } else {
    OovStats stats;
    text = embed_text(query, model, tables, &stats);
  }
  const auto audio = embed_split_audio(model, split);
  const auto m = score_all(std::vector<std::vector<Real>>{text}, audio,
                           model.config().scorer);
  const auto order = rank_row(m.row(0));
  std::vector<RankedClip> out;
  for (std::size_t i = 0; i < top_k; ++i) {
    out.push_back({split.manifest.items[order[i]].file_name, m.at(0, order[i])});
  }
  return out;
}

}  // namespace audioret
