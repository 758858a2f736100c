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

// Command-line front end: features, train, eval-retrieval, eval-captions, rank.

#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"
#include "audioret/cli.hpp"

namespace {

std::optional<audioret::fs::path> opt_path(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return audioret::fs::path(s);
}

}  // namespace

int main(int argc, char** argv) {
  using namespace audioret;
  CLI::App app{"audioret: text-to-audio retrieval and caption metrics"};
  app.require_subcommand(1);

  std::string out;
  auto add_out = [&](CLI::App* sub) {
    sub->add_option("--out", out, "Also write the report to this path");
  };

  std::string in_dir, out_dir;
  dsp::LogMelParams mel;
  auto* features = app.add_subcommand("features", "Log-mel features for a WAV directory");
  features->add_option("in_dir", in_dir, "Directory of WAV files")->required();
  features->add_option("out_dir", out_dir, "Output directory for .fmat files")->required();
  features->add_option("--n-mels", mel.n_mels, "Mel bands")->capture_default_str();
  features->add_option("--win-ms", mel.win_ms, "Window length (ms)")->capture_default_str();
  features->add_option("--hop-ms", mel.hop_ms, "Hop length (ms)")->capture_default_str();
  features->add_option("--f-min", mel.f_min, "Lowest filter edge (Hz)")->capture_default_str();
  features->add_option("--f-max", mel.f_max, "Highest filter edge (Hz), 0 = Nyquist");
  add_out(features);

  std::string config;
  auto* train = app.add_subcommand("train", "Train from a run config");
  train->add_option("config", config, "Run config (JSON)")->required();
  add_out(train);

  cli::SplitArgs split;
  std::string words, sentences;
  auto add_split = [&](CLI::App* sub) {
    sub->add_option("--checkpoint", split.checkpoint, "Model checkpoint")->required();
    sub->add_option("--captions", split.captions, "Captions CSV of the split")->required();
    sub->add_option("--features", split.features, "Directory of .fmat files")->required();
    sub->add_option("--word-embeddings", words, "Word vectors (text format)");
    sub->add_option("--caption-embeddings", sentences, "Caption vectors (EVEC)");
    add_out(sub);
  };
  auto* eval_retrieval = app.add_subcommand("eval-retrieval", "R@1/5/10 and mAP@10 on a split");
  add_split(eval_retrieval);

  std::string candidates, references, spice;
  auto* eval_captions = app.add_subcommand("eval-captions", "Caption metrics");
  eval_captions->add_option("--candidates", candidates, "CSV file_name,caption")->required();
  eval_captions->add_option("--references", references, "Captions CSV")->required();
  eval_captions->add_option("--spice", spice, "CSV file_name,spice");
  add_out(eval_captions);

  std::string query, query_vector;
  std::size_t top_k = 10;
  auto* rank = app.add_subcommand("rank", "Rank clips for a text query");
  add_split(rank);
  rank->add_option("--query", query, "Query text")->required();
  rank->add_option("--top-k", top_k, "Number of results")->capture_default_str();
  rank->add_option("--query-vector", query_vector,
                   "Sentence vector for the query (sentence_table models)");

  CLI11_PARSE(app, argc, argv);

  split.word_embeddings = opt_path(words);
  split.caption_embeddings = opt_path(sentences);
  const auto out_path = opt_path(out);
  if (*features) return cli::cmd_features(in_dir, out_dir, mel, std::cout, std::cerr, out_path);
  if (*train) return cli::cmd_train(config, std::cout, std::cerr, out_path);
  if (*eval_retrieval) return cli::cmd_eval_retrieval(split, std::cout, std::cerr, out_path);
  if (*eval_captions) {
    return cli::cmd_eval_captions(candidates, references, opt_path(spice), std::cout,
                                  std::cerr, out_path);
  }
  std::optional<std::string> qv;
  if (!query_vector.empty()) qv = query_vector;
  return cli::cmd_rank(split, query, top_k, qv, std::cout, std::cerr, out_path);
}
