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
#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "audioret/corpus.hpp"
#include "audioret/error.hpp"

namespace audioret::metrics {

using Tokens = std::vector<std::string>;
using NGram = std::vector<std::string>;
using NGramCounts = std::map<NGram, std::size_t>;

// Contiguous n-grams with multiplicity.
inline NGramCounts ngrams(const Tokens& tokens, std::size_t n) {
  if (n < 1) fail("ngrams: n must be >= 1");
  NGramCounts counts;
  if (tokens.size() < n) return counts;
  for (std::size_t i = 0; i + n <= tokens.size(); ++i) {
    ++counts[NGram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
                   tokens.begin() + static_cast<std::ptrdiff_t>(i + n))];
  }
  return counts;
}

struct EvalItem {
  std::string key;
  Tokens candidate;
  std::vector<Tokens> references;
};

using EvalSet = std::vector<EvalItem>;

inline void check_references(const EvalSet& set) {
  for (const auto& item : set) {
    if (item.references.empty()) fail("item '", item.key, "' has no references");
  }
}

// ---------------------------------------------------------------------------
// BLEU (corpus level, closest-reference brevity penalty, no smoothing)

struct BleuScores {
  std::array<double, 4> bleu{};  // BLEU_1..BLEU_4
  std::array<double, 4> precision{};
  double brevity_penalty = 0.0;
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;
};

inline BleuScores bleu_corpus(const EvalSet& set, std::size_t max_n = 4) {
  if (set.empty()) fail("bleu_corpus: empty evaluation set");
  if (max_n < 1 || max_n > 4) fail("bleu_corpus: max_n must be in [1, 4]");
  check_references(set);
  std::array<double, 4> matched{}, total{};
  BleuScores out;
  for (const auto& item : set) {
    const std::size_t c = item.candidate.size();
    out.candidate_length += c;
    std::size_t best_len = item.references.front().size();
    for (const auto& ref : item.references) {
      const auto diff = [&](std::size_t len) {
        return len > c ? len - c : c - len;
      };
      if (diff(ref.size()) < diff(best_len) ||
          (diff(ref.size()) == diff(best_len) && ref.size() < best_len)) {
        best_len = ref.size();
      }
    }
    out.reference_length += best_len;
    for (std::size_t n = 1; n <= max_n; ++n) {
      const auto cand = ngrams(item.candidate, n);
      NGramCounts max_ref;
      for (const auto& ref : item.references) {
        for (const auto& [g, k] : ngrams(ref, n)) {
          auto& slot = max_ref[g];
          slot = std::max(slot, k);
        }
      }
      for (const auto& [g, k] : cand) {
        total[n - 1] += static_cast<double>(k);
        auto it = max_ref.find(g);
        if (it != max_ref.end()) {
          matched[n - 1] += static_cast<double>(std::min(k, it->second));
        }
      }
    }
  }
  if (out.candidate_length == 0) return out;
  out.brevity_penalty =
      std::min(1.0, std::exp(1.0 - static_cast<double>(out.reference_length) /
                                       static_cast<double>(out.candidate_length)));
  double log_sum = 0.0;
  bool zero = false;
  for (std::size_t n = 1; n <= max_n; ++n) {
    out.precision[n - 1] = total[n - 1] > 0 ? matched[n - 1] / total[n - 1] : 0.0;
    if (out.precision[n - 1] == 0.0) zero = true;
    if (!zero) log_sum += std::log(out.precision[n - 1]);
    out.bleu[n - 1] =
        zero ? 0.0
             : out.brevity_penalty * std::exp(log_sum / static_cast<double>(n));
  }
  return out;
}

// ---------------------------------------------------------------------------
// ROUGE-L

inline std::size_t lcs_length(const Tokens& a, const Tokens& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

inline constexpr double kRougeBeta = 1.2;

// F-measure from the best precision and the best recall over references.
inline double rouge_l(const Tokens& candidate, const std::vector<Tokens>& references,
                      double beta = kRougeBeta) {
  if (references.empty()) fail("rouge_l: no references");
  if (candidate.empty()) return 0.0;
  double best_p = 0.0, best_r = 0.0;
  for (const auto& ref : references) {
    if (ref.empty()) continue;
    const auto lcs = static_cast<double>(lcs_length(candidate, ref));
    best_p = std::max(best_p, lcs / static_cast<double>(candidate.size()));
    best_r = std::max(best_r, lcs / static_cast<double>(ref.size()));
  }
  if (best_p == 0.0 || best_r == 0.0) return 0.0;
  const double b2 = beta * beta;
  return (1.0 + b2) * best_p * best_r / (best_r + b2 * best_p);
}

inline double rouge_l_corpus(const EvalSet& set, double beta = kRougeBeta) {
  if (set.empty()) fail("rouge_l: empty evaluation set");
  double acc = 0.0;
  for (const auto& item : set) acc += rouge_l(item.candidate, item.references, beta);
  return acc / static_cast<double>(set.size());
}

// ---------------------------------------------------------------------------
// METEOR-lite: exact matches only.

struct MeteorParams {
  double alpha = 0.9;
  double beta = 3.0;
  double gamma = 0.5;
};

struct Alignment {
  std::size_t matches = 0;
  std::size_t chunks = 0;
};

namespace detail {

// Depth-first search over one-to-one exact alignments that reach the
// maximum match count, keeping the one with the fewest chunks. Candidate
// positions are visited left to right; a chunk starts whenever a matched
// candidate token does not directly continue the previous match on both
// sides.
class ChunkMinimizer {
 public:
  ChunkMinimizer(const Tokens& cand, const Tokens& ref) : cand_(cand), ref_(ref) {
    std::map<std::string, std::pair<std::size_t, std::size_t>> counts;
    for (const auto& t : cand) ++counts[t].first;
    for (const auto& t : ref) ++counts[t].second;
    for (const auto& [tok, c] : counts) {
      const auto k = std::min(c.first, c.second);
      if (k) quota_[tok] = k;
      target_ += k;
    }
    used_.assign(ref.size(), false);
    remaining_after_.assign(cand.size() + 1, 0);
    for (std::size_t i = 0; i < cand.size(); ++i) {
      matchable_.push_back(quota_.count(cand[i]) > 0);
    }
    for (std::size_t i = cand.size(); i-- > 0;) {
      remaining_after_[i] = remaining_after_[i + 1] + (matchable_[i] ? 1 : 0);
    }
  }

  Alignment solve() {
    if (target_ == 0) return {};
    best_chunks_ = std::numeric_limits<std::size_t>::max();
    search(0, 0, kNoPrev, kNoPrev, 0);
    return {target_, best_chunks_};
  }

 private:
  static constexpr std::size_t kNoPrev = std::numeric_limits<std::size_t>::max();

  void search(std::size_t i, std::size_t matched, std::size_t prev_c,
              std::size_t prev_r, std::size_t chunks) {
    if (chunks >= best_chunks_) return;
    if (matched == target_) {
      best_chunks_ = chunks;
      return;
    }
    if (i >= cand_.size()) return;
    if (matched + remaining_after_[i] < target_) return;
    if (matchable_[i]) {
      auto q = quota_.find(cand_[i]);
      if (q->second > 0) {
        // Try the adjacent continuation first: it never opens a chunk.
        std::vector<std::size_t> options;
        for (std::size_t j = 0; j < ref_.size(); ++j) {
          if (!used_[j] && ref_[j] == cand_[i]) options.push_back(j);
        }
        std::stable_partition(options.begin(), options.end(), [&](std::size_t j) {
          return prev_c != kNoPrev && prev_c + 1 == i && prev_r + 1 == j;
        });
        for (auto j : options) {
          const bool continues = prev_c != kNoPrev && prev_c + 1 == i && prev_r + 1 == j;
          used_[j] = true;
          --q->second;
          search(i + 1, matched + 1, i, j, chunks + (continues ? 0 : 1));
          ++q->second;
          used_[j] = false;
        }
      }
    }
    search(i + 1, matched, prev_c, prev_r, chunks);
  }

  const Tokens& cand_;
  const Tokens& ref_;
  std::map<std::string, std::size_t> quota_;
  std::size_t target_ = 0;
  std::vector<bool> used_;
  std::vector<bool> matchable_;
  std::vector<std::size_t> remaining_after_;
  std::size_t best_chunks_ = 0;
};

}  // namespace detail

inline Alignment meteor_alignment(const Tokens& candidate, const Tokens& reference) {
  return detail::ChunkMinimizer(candidate, reference).solve();
}

inline double meteor_against(const Tokens& candidate, const Tokens& reference,
                             const MeteorParams& p = {}) {
  if (candidate.empty() || reference.empty()) return 0.0;
  const auto a = meteor_alignment(candidate, reference);
  if (a.matches == 0) return 0.0;
  const double m = static_cast<double>(a.matches);
  const double precision = m / static_cast<double>(candidate.size());
  const double recall = m / static_cast<double>(reference.size());
  const double f = precision * recall / (p.alpha * precision + (1.0 - p.alpha) * recall);
  const double penalty = p.gamma * std::pow(static_cast<double>(a.chunks) / m, p.beta);
  return f * (1.0 - penalty);
}

inline double meteor_lite(const Tokens& candidate, const std::vector<Tokens>& references,
                          const MeteorParams& p = {}) {
  if (references.empty()) fail("meteor_lite: no references");
  double best = 0.0;
  for (const auto& ref : references) best = std::max(best, meteor_against(candidate, ref, p));
  return best;
}

inline double meteor_corpus(const EvalSet& set, const MeteorParams& p = {}) {
  if (set.empty()) fail("meteor_lite: empty evaluation set");
  double acc = 0.0;
  for (const auto& item : set) acc += meteor_lite(item.candidate, item.references, p);
  return acc / static_cast<double>(set.size());
}

// ---------------------------------------------------------------------------
// CIDEr-D

struct CiderParams {
  std::size_t max_n = 4;
  double sigma = 6.0;
  double scale = 10.0;
};

struct CiderScores {
  double corpus = 0.0;
  std::vector<double> per_item;
};

inline CiderScores cider_d(const EvalSet& set, const CiderParams& p = {}) {
  if (set.size() < 2) fail("cider_d: corpus needs at least 2 items, got ", set.size());
  if (p.max_n < 1) fail("cider_d: max_n must be >= 1");
  check_references(set);
  const double n_items = static_cast<double>(set.size());

  // Document frequency: number of items whose reference set contains the
  // n-gram.
  std::map<NGram, std::size_t> df;
  for (const auto& item : set) {
    std::set<NGram> seen;
    for (const auto& ref : item.references) {
      for (std::size_t n = 1; n <= p.max_n; ++n) {
        for (const auto& [g, k] : ngrams(ref, n)) seen.insert(g);
      }
    }
    for (const auto& g : seen) ++df[g];
  }
  auto idf = [&](const NGram& g) {
    auto it = df.find(g);
    const double d = it == df.end() ? 1.0 : static_cast<double>(std::max<std::size_t>(1, it->second));
    return std::log(n_items / d);
  };
  auto weights = [&](const Tokens& tokens, std::size_t n) {
    std::map<NGram, double> w;
    for (const auto& [g, k] : ngrams(tokens, n)) w[g] = static_cast<double>(k) * idf(g);
    return w;
  };
  auto norm = [](const std::map<NGram, double>& w) {
    double s = 0.0;
    for (const auto& [g, v] : w) s += v * v;
    return std::sqrt(s);
  };

  CiderScores out;
  for (const auto& item : set) {
    double per_n_sum = 0.0;
    for (std::size_t n = 1; n <= p.max_n; ++n) {
      const auto wc = weights(item.candidate, n);
      const double nc = norm(wc);
      double ref_sum = 0.0;
      for (const auto& ref : item.references) {
        const auto wr = weights(ref, n);
        const double nr = norm(wr);
        double sim = 0.0;
        if (nc > 0.0 && nr > 0.0) {
          double num = 0.0;
          for (const auto& [g, vc] : wc) {
            auto it = wr.find(g);
            if (it != wr.end()) num += std::min(vc, it->second) * it->second;
          }
          sim = num / (nc * nr);
        }
        const double delta = static_cast<double>(item.candidate.size()) -
                             static_cast<double>(ref.size());
        sim *= std::exp(-(delta * delta) / (2.0 * p.sigma * p.sigma));
        ref_sum += sim;
      }
      per_n_sum += ref_sum / static_cast<double>(item.references.size());
    }
    out.per_item.push_back(p.scale * per_n_sum / static_cast<double>(p.max_n));
  }
  double acc = 0.0;
  for (double v : out.per_item) acc += v;
  out.corpus = acc / n_items;
  return out;
}

// ---------------------------------------------------------------------------
// SPICE pass-through and SPIDEr.

struct SpiderResult {
  std::optional<double> spice;
  std::optional<double> spider;
};

inline SpiderResult spider_combine(double cider, std::optional<double> spice) {
  SpiderResult r;
  if (!spice) return r;
  r.spice = *spice;
  r.spider = (*spice + cider) / 2.0;
  return r;
}

// SPICE values as CSV `file_name,spice`. Every scored key must be present.
inline double mean_spice(const fs::path& spice_csv, const std::vector<std::string>& keys) {
  const auto rows = csv::parse(byte_io::read_file(spice_csv), spice_csv.string());
  if (rows.empty() || rows[0].fields != std::vector<std::string>{"file_name", "spice"}) {
    fail(spice_csv.string(), ": header must be 'file_name,spice'");
  }
  std::map<std::string, double> values;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    if (f.size() != 2) fail(spice_csv.string(), ": row ", rows[i].line, ": column count");
    auto v = audioret::detail::parse_real<double>(f[1]);
    if (!v || *v < 0.0 || *v > 1.0) {
      fail(spice_csv.string(), ": row ", rows[i].line, ": SPICE value must lie in [0, 1]");
    }
    values[f[0]] = *v;
  }
  std::vector<std::string> missing;
  double acc = 0.0;
  for (const auto& k : keys) {
    auto it = values.find(k);
    if (it == values.end()) {
      missing.push_back(k);
    } else {
      acc += it->second;
    }
  }
  if (!missing.empty()) {
    std::string list;
    for (const auto& m : missing) list += (list.empty() ? "" : ", ") + m;
    fail(spice_csv.string(), ": missing SPICE values for: ", list);
  }
  return keys.empty() ? 0.0 : acc / static_cast<double>(keys.size());
}

// ---------------------------------------------------------------------------
// Whole-corpus caption evaluation.

struct CorpusScores {
  std::array<double, 4> bleu{};
  double rouge_l = 0.0;
  double meteor = 0.0;
  double cider = 0.0;
  std::optional<double> spice;
  std::optional<double> spider;
};

inline CorpusScores score_corpus(const EvalSet& set, std::optional<double> spice = std::nullopt) {
  CorpusScores s;
  s.bleu = bleu_corpus(set).bleu;
  s.rouge_l = rouge_l_corpus(set);
  s.meteor = meteor_corpus(set);
  s.cider = cider_d(set).corpus;
  const auto sp = spider_combine(s.cider, spice);
  s.spice = sp.spice;
  s.spider = sp.spider;
  return s;
}

inline std::string format_scores(const CorpusScores& s) {
  char buf[512];
  int n = std::snprintf(buf, sizeof buf,
                        "{\"BLEU_1\":%.4f,\"BLEU_2\":%.4f,\"BLEU_3\":%.4f,\"BLEU_4\":%.4f,"
                        "\"ROUGE_L\":%.4f,\"METEOR\":%.4f,\"CIDEr\":%.4f",
                        s.bleu[0], s.bleu[1], s.bleu[2], s.bleu[3], s.rouge_l, s.meteor,
                        s.cider);
  std::string out(buf, static_cast<std::size_t>(n));
  if (s.spice && s.spider) {
    n = std::snprintf(buf, sizeof buf, ",\"SPICE\":%.4f,\"SPIDEr\":%.4f", *s.spice, *s.spider);
    out.append(buf, static_cast<std::size_t>(n));
  }
  return out + "}";
}

// Candidates CSV `file_name,caption`, one row per clip.
inline std::map<std::string, std::string> load_candidates(const fs::path& path) {
  const auto rows = csv::parse(byte_io::read_file(path), path.string());
  if (rows.empty() || rows[0].fields != std::vector<std::string>{"file_name", "caption"}) {
    fail(path.string(), ": header must be 'file_name,caption'");
  }
  std::map<std::string, std::string> out;
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i].fields;
    if (f.size() != 2) fail(path.string(), ": row ", rows[i].line, ": column count");
    if (!out.emplace(f[0], f[1]).second) {
      fail(path.string(), ": row ", rows[i].line, ": duplicate file_name '", f[0], "'");
    }
  }
  return out;
}

// Pairs candidates with Clotho-format references. Unknown and missing
// file_names are both reported, all at once.
inline EvalSet build_eval_set(const std::map<std::string, std::string>& candidates,
                              const std::vector<CaptionRecord>& references) {
  std::map<std::string, std::vector<Tokens>> refs;
  for (const auto& r : references) refs[r.file_name].push_back(r.tokens);
  std::vector<std::string> unknown, missing;
  for (const auto& [name, text] : candidates) {
    if (!refs.count(name)) unknown.push_back(name);
  }
  for (const auto& [name, r] : refs) {
    if (!candidates.count(name)) missing.push_back(name);
  }
  if (!unknown.empty() || !missing.empty()) {
    std::string msg;
    for (const auto& u : unknown) msg += "\n  candidate for unknown file_name: " + u;
    for (const auto& m : missing) msg += "\n  missing candidate for file_name: " + m;
    fail("candidate/reference mismatch:", msg);
  }
  EvalSet set;
  for (const auto& [name, r] : refs) {
    set.push_back({name, normalize_caption(candidates.at(name)), r});
  }
  return set;
}

inline CorpusScores evaluate_captions(const fs::path& candidates_csv,
                                      const fs::path& references_csv,
                                      const std::optional<fs::path>& spice_csv = std::nullopt) {
  const auto set = build_eval_set(load_candidates(candidates_csv), load_captions(references_csv));
  std::optional<double> spice;
  if (spice_csv) {
    std::vector<std::string> keys;
    for (const auto& item : set) keys.push_back(item.key);
    spice = mean_spice(*spice_csv, keys);
  }
  return score_corpus(set, spice);
}

}  // namespace audioret::metrics
