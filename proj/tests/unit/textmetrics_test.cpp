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

#include <gtest/gtest.h>

#include <cmath>
#include <fstream>
#include <map>
#include <vector>

#include "audioret/textmetrics.hpp"
#include "../support/fixtures.hpp"
#include "../support/oracles.hpp"

using namespace audioret;
using namespace audioret::metrics;

namespace {

Tokens toks(const std::string& s) { return normalize_caption(s); }

EvalItem item(const std::string& cand, std::vector<std::string> refs, std::string key = "k") {
  EvalItem it{std::move(key), toks(cand), {}};
  for (const auto& r : refs) it.references.push_back(toks(r));
  return it;
}

Tokens random_tokens(SplitMix64& rng, std::size_t min_len) {
  Tokens t(min_len + rng.uniform(9 - min_len));
  for (auto& w : t) w = "v" + std::to_string(rng.uniform(10));
  return t;
}

EvalSet random_corpus(SplitMix64& rng) {
  EvalSet set(2 + rng.uniform(5));
  for (std::size_t i = 0; i < set.size(); ++i) {
    set[i].key = "clip" + std::to_string(i);
    set[i].candidate = random_tokens(rng, 1);
    for (int r = 0; r < 5; ++r) set[i].references.push_back(random_tokens(rng, 1));
  }
  return set;
}

std::vector<oracle::Item> to_oracle(const EvalSet& set) {
  std::vector<oracle::Item> out;
  for (const auto& it : set) out.push_back({it.candidate, it.references});
  return out;
}

void write(const fs::path& p, const std::string& text) { std::ofstream(p) << text; }

}  // namespace

TEST(NGrams, Examples) {
  const Tokens aba{"a", "b", "a"};
  EXPECT_EQ(ngrams(aba, 1), (NGramCounts{{{"a"}, 2}, {{"b"}, 1}}));
  EXPECT_EQ(ngrams(aba, 2), (NGramCounts{{{"a", "b"}, 1}, {{"b", "a"}, 1}}));
  EXPECT_TRUE(ngrams(Tokens{"a"}, 2).empty());
  EXPECT_THROW(ngrams(aba, 0), Error);
}

TEST(Bleu, Examples) {
  auto s = bleu_corpus({item("the cat sat", {"the cat sat down"})});
  EXPECT_NEAR(s.bleu[0], std::exp(1.0 - 4.0 / 3.0), 1e-12);
  EXPECT_NEAR(s.bleu[0], 0.7165, 5e-5);
  s = bleu_corpus({item("the the the", {"the cat"})});
  EXPECT_NEAR(s.bleu[0], 1.0 / 3.0, 1e-12);
  EXPECT_EQ(s.brevity_penalty, 1.0);
  s = bleu_corpus({item("a dog barks at the moon", {"a cat", "a dog barks at the moon", "x"})});
  for (double b : s.bleu) EXPECT_NEAR(b, 1.0, 1e-12);
}

TEST(Bleu, ClosestReferenceLengthTiesToShorter) {
  // Candidate length 3, references of length 2 and 4: r = 2, so BP = 1.
  const auto s = bleu_corpus({item("a b c", {"a b", "a b c d"})});
  EXPECT_EQ(s.reference_length, 2u);
  EXPECT_EQ(s.brevity_penalty, 1.0);
}

TEST(RougeL, Examples) {
  EXPECT_EQ(rouge_l(toks("a b c"), {toks("a b c")}), 1.0);
  const double p = 2.0 / 3, r = 2.0 / 5, b2 = 1.44;
  EXPECT_NEAR(rouge_l(toks("the cat sat"), {toks("the cat on the mat")}),
              (1 + b2) * p * r / (r + b2 * p), 1e-12);
  EXPECT_NEAR(rouge_l(toks("the cat sat"), {toks("the cat on the mat")}), 0.4784, 5e-5);
  EXPECT_EQ(rouge_l(toks("a b"), {toks("c d")}), 0.0);
  EXPECT_EQ(rouge_l({}, {toks("c d")}), 0.0);
}

TEST(MeteorLite, Examples) {
  EXPECT_NEAR(meteor_lite(toks("a b c"), {toks("a b c")}), 1 - 0.5 / 27, 1e-12);
  EXPECT_NEAR(meteor_lite(toks("a b c"), {toks("a b c")}), 0.9815, 5e-5);
  EXPECT_NEAR(meteor_lite(toks("the cat sat"), {toks("the sat cat")}), 0.5, 1e-12);
  EXPECT_EQ(meteor_lite(toks("x y"), {toks("a b")}), 0.0);
  const auto al = meteor_alignment(toks("the cat sat"), toks("the sat cat"));
  EXPECT_EQ(al.matches, 3u);
  EXPECT_EQ(al.chunks, 3u);
}

TEST(MeteorLite, PrefersFewerChunksAmongMaximalAlignments) {
  // "a b" can align contiguously to the second occurrence in the reference.
  const auto al = meteor_alignment(toks("a b"), toks("a x a b"));
  EXPECT_EQ(al.matches, 2u);
  EXPECT_EQ(al.chunks, 1u);
}

TEST(CiderD, Examples) {
  EvalSet two{item("a dog", {"a dog barks"}, "1"), item("rain", {"rain falls"}, "2")};
  CiderParams p;
  p.max_n = 1;
  const auto s = cider_d(two, p);
  EXPECT_NEAR(s.per_item[0], 10 * 2 / std::sqrt(6.0) * std::exp(-1.0 / 72), 1e-12);
  EXPECT_NEAR(s.per_item[0], 8.052, 5e-4);

  EvalSet none{item("zzz", {"a dog barks"}, "1"), item("rain", {"rain falls"}, "2")};
  EXPECT_EQ(cider_d(none).per_item[0], 0.0);

  EvalSet same{item("a b c", {"a b c"}, "1"), item("d e", {"f g"}, "2")};
  p.max_n = 3;
  EXPECT_NEAR(cider_d(same, p).per_item[0], 10.0, 1e-12);

  EXPECT_THROW(cider_d({item("a", {"a"})}), Error);
}

TEST(Spider, Combine) {
  const auto r = spider_combine(0.358, 0.109);
  EXPECT_NEAR(*r.spider, 0.2335, 1e-12);
  EXPECT_NEAR(*r.spider, 0.233, 5e-4);
  EXPECT_FALSE(spider_combine(0.358, std::nullopt).spider.has_value());
  EXPECT_FALSE(spider_combine(0.358, std::nullopt).spice.has_value());
  EXPECT_EQ(*spider_combine(0.7, 0.7).spider, 0.7);
}

TEST(Spider, SpiceFile) {
  fixtures::TempDir dir("spice");
  write(dir / "s.csv", "file_name,spice\na.wav,0.2\nb.wav,0.4\nc.wav,1\n");
  EXPECT_NEAR(mean_spice(dir / "s.csv", {"a.wav", "b.wav"}), 0.3, 1e-15);
  try {
    mean_spice(dir / "s.csv", {"a.wav", "q.wav"});
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("q.wav"), std::string::npos);
  }
  write(dir / "bad.csv", "file_name,spice\na.wav,1.5\n");
  EXPECT_THROW(mean_spice(dir / "bad.csv", {"a.wav"}), Error);
}

TEST(Metrics, MatchOracleOnRandomCorpora) {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 100; ++trial) {
    const auto set = random_corpus(rng);
    const auto items = to_oracle(set);
    const auto b = bleu_corpus(set);
    const auto ob = oracle::bleu(items);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(b.bleu[k], ob[k], 1e-9);
    EXPECT_NEAR(rouge_l_corpus(set), oracle::rouge_corpus(items), 1e-9);
    EXPECT_NEAR(meteor_corpus(set), oracle::meteor_corpus(items), 1e-9);
    EXPECT_NEAR(cider_d(set).corpus, oracle::cider(items), 1e-9);
  }
}

TEST(Metrics, InvariantUnderTokenRenaming) {
  SplitMix64 rng(32);
  std::map<std::string, std::string> rename;
  std::vector<int> perm{3, 7, 1, 0, 9, 2, 8, 5, 4, 6};
  for (int i = 0; i < 10; ++i) rename["v" + std::to_string(i)] = "w" + std::to_string(perm[i]);
  for (int trial = 0; trial < 50; ++trial) {
    const auto set = random_corpus(rng);
    auto renamed = set;
    for (auto& it : renamed) {
      for (auto& w : it.candidate) w = rename.at(w);
      for (auto& r : it.references) {
        for (auto& w : r) w = rename.at(w);
      }
    }
    const auto a = score_corpus(set), b = score_corpus(renamed);
    for (int k = 0; k < 4; ++k) EXPECT_NEAR(a.bleu[k], b.bleu[k], 1e-12);
    EXPECT_NEAR(a.rouge_l, b.rouge_l, 1e-12);
    EXPECT_NEAR(a.meteor, b.meteor, 1e-12);
    EXPECT_NEAR(a.cider, b.cider, 1e-12);
  }
}

TEST(Metrics, RangesAndBleuOrdering) {
  SplitMix64 rng(33);
  for (int trial = 0; trial < 200; ++trial) {
    const auto set = random_corpus(rng);
    const auto s = score_corpus(set);
    for (int k = 0; k < 4; ++k) {
      EXPECT_GE(s.bleu[k], 0.0);
      EXPECT_LE(s.bleu[k], 1.0);
      if (k > 0) {
        EXPECT_LE(s.bleu[k], s.bleu[k - 1] + 1e-12);
      }
    }
    EXPECT_GE(s.rouge_l, 0.0);
    EXPECT_LE(s.rouge_l, 1.0);
    EXPECT_GE(s.meteor, 0.0);
    EXPECT_LE(s.meteor, 1.0);
    EXPECT_GE(s.cider, 0.0);
    EXPECT_LE(s.cider, 10.0 + 1e-9);
  }
}

TEST(Metrics, DuplicateReferenceNeverLowersRougeOrMeteor) {
  SplitMix64 rng(34);
  for (int trial = 0; trial < 300; ++trial) {
    const auto cand = random_tokens(rng, 1);
    std::vector<Tokens> refs;
    for (int r = 0; r < 3; ++r) refs.push_back(random_tokens(rng, 1));
    auto more = refs;
    more.push_back(refs[rng.uniform(3)]);
    EXPECT_GE(rouge_l(cand, more), rouge_l(cand, refs));
    EXPECT_GE(meteor_lite(cand, more), meteor_lite(cand, refs));
  }
}

TEST(Metrics, EmptyCandidateScoresZero) {
  EvalSet set{item("", {"a b"}, "1"), item("c d", {"c d"}, "2")};
  const auto c = cider_d(set);
  EXPECT_EQ(c.per_item[0], 0.0);
  EXPECT_EQ(rouge_l(set[0].candidate, set[0].references), 0.0);
  EXPECT_EQ(meteor_lite(set[0].candidate, set[0].references), 0.0);
  EXPECT_NO_THROW(score_corpus(set));
}

TEST(EvaluateCaptions, IdentityAndReport) {
  fixtures::TempDir dir("caps");
  write(dir / "refs.csv",
        "file_name,caption_1,caption_2,caption_3,caption_4,caption_5\n"
        "a.wav,A dog barks loudly,a dog is barking,dogs bark,a hound barks,barking\n"
        "b.wav,Rain falls on a roof,rain on the roof,heavy rain,it rains,\"rain, falling\"\n");
  write(dir / "cands.csv",
        "file_name,caption\nb.wav,rain falls on a roof\na.wav,\"a dog, barks loudly\"\n");
  const auto s = evaluate_captions(dir / "cands.csv", dir / "refs.csv");
  EXPECT_NEAR(s.bleu[0], 1.0, 1e-12);
  EXPECT_NEAR(s.rouge_l, 1.0, 1e-12);
  EXPECT_FALSE(s.spider.has_value());
  const auto j = Json::parse(format_scores(s));
  std::vector<std::string> keys;
  for (auto it = j.begin(); it != j.end(); ++it) keys.push_back(it.key());
  std::sort(keys.begin(), keys.end());
  EXPECT_EQ(keys, (std::vector<std::string>{"BLEU_1", "BLEU_2", "BLEU_3", "BLEU_4", "CIDEr",
                                            "METEOR", "ROUGE_L"}));

  write(dir / "spice.csv", "file_name,spice\na.wav,0.1\nb.wav,0.3\n");
  const auto t = evaluate_captions(dir / "cands.csv", dir / "refs.csv", dir / "spice.csv");
  ASSERT_TRUE(t.spice && t.spider);
  EXPECT_NEAR(*t.spice, 0.2, 1e-15);
  EXPECT_NEAR(*t.spider, (0.2 + t.cider) / 2, 1e-15);
  const auto k = Json::parse(format_scores(t));
  EXPECT_TRUE(k.contains("SPICE"));
  EXPECT_TRUE(k.contains("SPIDEr"));
  EXPECT_EQ(k.size(), 9u);
}

TEST(EvaluateCaptions, Errors) {
  fixtures::TempDir dir("caperr");
  write(dir / "refs.csv",
        "file_name,caption_1,caption_2,caption_3,caption_4,caption_5\n"
        "a.wav,one,two,three,four,five\nb.wav,one,two,three,four,five\n");
  write(dir / "unknown.csv", "file_name,caption\na.wav,x\nb.wav,y\nz.wav,q\n");
  write(dir / "missing.csv", "file_name,caption\na.wav,x\n");
  write(dir / "dup.csv", "file_name,caption\na.wav,x\na.wav,y\nb.wav,z\n");
  write(dir / "header.csv", "name,caption\na.wav,x\n");
  try {
    evaluate_captions(dir / "unknown.csv", dir / "refs.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("z.wav"), std::string::npos);
  }
  try {
    evaluate_captions(dir / "missing.csv", dir / "refs.csv");
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("b.wav"), std::string::npos);
  }
  EXPECT_THROW(evaluate_captions(dir / "dup.csv", dir / "refs.csv"), Error);
  EXPECT_THROW(evaluate_captions(dir / "header.csv", dir / "refs.csv"), Error);
}
