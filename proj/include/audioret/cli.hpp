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
#include <cstdio>
#include <filesystem>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "audioret/byte_io.hpp"
#include "audioret/corpus.hpp"
#include "audioret/dsp.hpp"
#include "audioret/error.hpp"
#include "audioret/json_fields.hpp"
#include "audioret/model.hpp"
#include "audioret/optim.hpp"
#include "audioret/retrieval.hpp"
#include "audioret/textmetrics.hpp"

namespace audioret::cli {

// Baseline numbers of the challenge system, printed beside retrieval reports.
inline constexpr const char* kBaselineNote =
    "reference (challenge baseline): R1 0.02, R5 0.09, R10 0.16, mAP10 0.05";

struct DataPaths {
  fs::path train_captions;
  fs::path train_features;
  std::optional<fs::path> validation_captions;
  std::optional<fs::path> validation_features;
  std::optional<fs::path> word_embeddings;
  std::optional<fs::path> caption_embeddings;
};

struct RunConfig {
  std::uint64_t seed = 0;
  ModelConfig model;
  TrainConfig train;
  DataPaths data;
  fs::path checkpoint;
  fs::path epoch_log;
};

namespace detail {

inline fs::path resolve(const fs::path& base, const std::string& p) {
  fs::path path(p);
  return path.is_absolute() ? path : base / path;
}

}  // namespace detail

// Relative paths are taken relative to `base_dir` (the config file's folder).
inline RunConfig run_config_from_json(const Json& j, const fs::path& base_dir = {}) {
  JsonFields f(j, "");
  RunConfig rc;
  rc.seed = f.get<std::uint64_t>("seed", 0);

  const Json* model = f.child("model");
  if (!model) fail("model: missing required key");
  if (model->is_object() && model->contains("seed")) {
    fail("model.seed: not allowed here, use the top-level seed");
  }
  rc.model = model_config_from_json(*model, "model");
  rc.model.seed = rc.seed;

  rc.train.seed = rc.seed;
  if (const Json* t = f.child("train")) {
    JsonFields tf(*t, "train");
    rc.train.epochs = tf.get<int>("epochs", rc.train.epochs);
    rc.train.batch_size = tf.get<std::size_t>("batch_size", rc.train.batch_size);
    rc.train.early_stop_patience =
        tf.get<int>("early_stop_patience", rc.train.early_stop_patience);
    if (const Json* p = tf.child("plateau")) {
      JsonFields pf(*p, "train.plateau");
      auto& pl = rc.train.plateau;
      pl.factor = pf.get<double>("factor", pl.factor);
      pl.patience = pf.get<int>("patience", pl.patience);
      pl.min_lr = pf.get<double>("min_lr", pl.min_lr);
      pl.threshold = pf.get<double>("threshold", pl.threshold);
      pf.finish();
    }
    tf.finish();
  }
  rc.train.validate();

  const Json* data = f.child("data");
  if (!data) fail("data: missing required key");
  JsonFields df(*data, "data");
  rc.data.train_captions = detail::resolve(base_dir, df.require<std::string>("train_captions"));
  rc.data.train_features = detail::resolve(base_dir, df.require<std::string>("train_features"));
  auto optional_path = [&](const char* key) -> std::optional<fs::path> {
    const auto v = df.get<std::string>(key, "");
    if (v.empty()) return std::nullopt;
    return detail::resolve(base_dir, v);
  };
  rc.data.validation_captions = optional_path("validation_captions");
  rc.data.validation_features = optional_path("validation_features");
  rc.data.word_embeddings = optional_path("word_embeddings");
  rc.data.caption_embeddings = optional_path("caption_embeddings");
  df.finish();
  if (rc.data.validation_captions.has_value() != rc.data.validation_features.has_value()) {
    fail("data: validation_captions and validation_features go together");
  }
  if (rc.model.text_mode == TextMode::word_average && !rc.data.word_embeddings) {
    fail("data.word_embeddings: required for text_mode word_average");
  }
  if (rc.model.text_mode == TextMode::sentence_table && !rc.data.caption_embeddings) {
    fail("data.caption_embeddings: required for text_mode sentence_table");
  }

  const Json* out = f.child("output");
  if (!out) fail("output: missing required key");
  JsonFields of(*out, "output");
  rc.checkpoint = detail::resolve(base_dir, of.require<std::string>("checkpoint"));
  rc.epoch_log = detail::resolve(base_dir, of.require<std::string>("epoch_log"));
  of.finish();
  f.finish();
  return rc;
}

inline RunConfig load_run_config(const fs::path& path) {
  Json j;
  try {
    j = Json::parse(byte_io::read_file(path));
  } catch (const Json::parse_error& e) {
    fail(path.string(), ": ", e.what());
  }
  return run_config_from_json(j, path.parent_path());
}

// Text tables are held by value here; TextTables only points at them.
struct LoadedTables {
  std::optional<EmbeddingTable> words;
  std::optional<CaptionEmbeddingTable> sentences;

  TextTables view() const {
    return {words ? &*words : nullptr, sentences ? &*sentences : nullptr};
  }
};

inline LoadedTables load_tables(const std::optional<fs::path>& words,
                                const std::optional<fs::path>& sentences) {
  LoadedTables t;
  if (words) t.words = load_word_embeddings(*words);
  if (sentences) t.sentences = load_caption_embeddings(*sentences);
  return t;
}

namespace detail {

inline void emit(std::ostream& out, const std::optional<fs::path>& out_path,
                 const std::string& report) {
  out << report << "\n";
  if (out_path) byte_io::write_file(*out_path, report + "\n");
}

inline void report_oov(std::ostream& err, const OovStats& s) {
  if (s.oov_tokens || s.all_oov_captions) {
    err << "warning: " << s.oov_tokens << " out-of-vocabulary tokens, "
        << s.all_oov_captions << " captions embedded as zero vectors\n";
  }
}

template <typename Fn>
int guarded(std::ostream& err, Fn&& fn) {
  try {
    return fn();
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 1;
  }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Commands. Each returns the process exit code.

inline int cmd_features(const fs::path& in_dir, const fs::path& out_dir,
                        const dsp::LogMelParams& params, std::ostream& out,
                        std::ostream& err,
                        const std::optional<fs::path>& out_path = std::nullopt) {
  return detail::guarded(err, [&] {
    if (!fs::is_directory(in_dir)) fail(in_dir.string(), ": not a directory");
    std::vector<fs::path> inputs;
    for (const auto& entry : fs::directory_iterator(in_dir)) {
      if (!entry.is_regular_file()) continue;
      auto ext = entry.path().extension().string();
      std::transform(ext.begin(), ext.end(), ext.begin(),
                     [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
      if (ext == ".wav") inputs.push_back(entry.path());
    }
    if (inputs.empty()) fail(in_dir.string(), ": no input files");
    std::sort(inputs.begin(), inputs.end());
    fs::create_directories(out_dir);
    std::size_t done = 0, frames = 0, failed = 0;
    for (const auto& wav : inputs) {
      try {
        auto feats = dsp::log_mel_features(dsp::read_wav(wav), params);
        feats.source_file = wav.filename().string();
        write_fmat(out_dir / (wav.filename().string() + ".fmat"), feats);
        ++done;
        frames += feats.rows;
      } catch (const std::exception& e) {
        ++failed;
        err << "error: " << wav.filename().string() << ": " << e.what() << "\n";
      }
    }
    char buf[128];
    std::snprintf(buf, sizeof buf, "files=%zu, frames_total=%zu", done, frames);
    detail::emit(out, out_path, buf);
    if (failed) err << failed << " of " << inputs.size() << " files failed\n";
    return failed ? 1 : 0;
  });
}

inline int cmd_train(const fs::path& config_path, std::ostream& out, std::ostream& err,
                     const std::optional<fs::path>& out_path = std::nullopt) {
  return detail::guarded(err, [&] {
    const auto rc = load_run_config(config_path);
    const auto tables = load_tables(rc.data.word_embeddings, rc.data.caption_embeddings);
    const auto train_split =
        load_split(rc.data.train_captions, rc.data.train_features, Split::development);
    std::optional<SplitData> validation;
    if (rc.data.validation_captions) {
      validation = load_split(*rc.data.validation_captions, *rc.data.validation_features,
                              Split::validation);
    }
    const auto result = train(train_split, validation ? &*validation : nullptr,
                              tables.view(), rc.model, rc.train);
    if (!rc.checkpoint.parent_path().empty()) fs::create_directories(rc.checkpoint.parent_path());
    if (!rc.epoch_log.parent_path().empty()) fs::create_directories(rc.epoch_log.parent_path());
    save_checkpoint(rc.checkpoint, result.checkpoint);
    byte_io::write_file(rc.epoch_log, format_epoch_log(result.log));
    detail::report_oov(err, result.oov);
    if (result.skipped_batches) {
      err << "warning: " << result.skipped_batches
          << " batches skipped (single clip, no imposters)\n";
    }
    const auto& best = result.log[static_cast<std::size_t>(result.checkpoint.epoch - 1)];
    std::ostringstream report;
    report << "best_epoch=" << result.checkpoint.epoch << " epochs_run=" << result.log.size()
           << " " << format_report(best.validation);
    detail::emit(out, out_path, report.str());
    return 0;
  });
}

struct SplitArgs {
  fs::path checkpoint;
  fs::path captions;
  fs::path features;
  std::optional<fs::path> word_embeddings;
  std::optional<fs::path> caption_embeddings;
};

inline int cmd_eval_retrieval(const SplitArgs& args, std::ostream& out, std::ostream& err,
                              const std::optional<fs::path>& out_path = std::nullopt) {
  return detail::guarded(err, [&] {
    const auto model = model_from_checkpoint(load_checkpoint(args.checkpoint));
    const auto tables = load_tables(args.word_embeddings, args.caption_embeddings);
    const auto split = load_split(args.captions, args.features, Split::evaluation);
    audioret::detail::check_split_dims(split, model.config(), tables.view(), "evaluation");
    OovStats oov;
    const auto report = evaluate_retrieval(model, split, tables.view(), &oov);
    detail::report_oov(err, oov);
    detail::emit(out, out_path, format_report(report));
    out << kBaselineNote << "\n";
    return 0;
  });
}

inline int cmd_eval_captions(const fs::path& candidates, const fs::path& references,
                             const std::optional<fs::path>& spice, std::ostream& out,
                             std::ostream& err,
                             const std::optional<fs::path>& out_path = std::nullopt) {
  return detail::guarded(err, [&] {
    const auto scores = metrics::evaluate_captions(candidates, references, spice);
    detail::emit(out, out_path, metrics::format_scores(scores));
    return 0;
  });
}

// Comma- or space-separated floats.
inline std::vector<float> parse_vector(std::string_view text) {
  std::vector<float> v;
  std::string s(text);
  std::replace(s.begin(), s.end(), ',', ' ');
  for (auto part : audioret::detail::split_spaces(s)) {
    auto x = audioret::detail::parse_float(part);
    if (!x) fail("query vector: non-numeric value '", part, "'");
    v.push_back(*x);
  }
  if (v.empty()) fail("query vector is empty");
  return v;
}

inline int cmd_rank(const SplitArgs& args, const std::string& query, std::size_t top_k,
                    const std::optional<std::string>& query_vector, std::ostream& out,
                    std::ostream& err,
                    const std::optional<fs::path>& out_path = std::nullopt) {
  return detail::guarded(err, [&] {
    if (normalize_caption(query).empty()) fail("query is empty after normalization");
    const auto model = model_from_checkpoint(load_checkpoint(args.checkpoint));
    const auto tables = load_tables(args.word_embeddings, args.caption_embeddings);
    const auto split = load_split(args.captions, args.features, Split::evaluation);
    std::optional<std::vector<float>> vec;
    if (query_vector) vec = parse_vector(*query_vector);
    if (vec && vec->size() != model.config().text_input_dim()) {
      fail("query vector has ", vec->size(), " values, model expects ",
           model.config().text_input_dim());
    }
    const auto ranked = rank_query(model, query, split, tables.view(), top_k, vec);
    // One `rank,file_name,score` line per result, no header.
    std::string report;
    char buf[64];
    for (std::size_t i = 0; i < ranked.size(); ++i) {
      std::snprintf(buf, sizeof buf, ",%.6f", ranked[i].score);
      report += (i ? "\n" : "") + std::to_string(i + 1) + "," + csv::quote(ranked[i].file_name) + buf;
    }
    detail::emit(out, out_path, report);
    return 0;
  });
}

}  // namespace audioret::cli
