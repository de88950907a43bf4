#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <string>
#include <vector>

#include "copyhan/decoder.hpp"
#include "copyhan/metrics.hpp"
#include "copyhan/model.hpp"
#include "copyhan/training.hpp"

namespace copyhan {

// Every tunable of the synthetic pipeline, flat so a key = value file can set it.
struct ExperimentSettings {
  std::uint64_t seed = 1;

  std::size_t train_docs = 200;
  std::size_t valid_docs = 50;
  std::size_t test_docs = 50;
  std::size_t n_concepts = 10;
  std::size_t doc_len = 4;
  bool first_sentence_cue = true;
  std::size_t vocab_max = 1000;

  std::size_t d_model = 32;
  std::size_t n_layers = 2;
  std::size_t m_heads = 2;
  std::size_t d_ff = 64;
  double dropout = 0.1;
  double label_smoothing = 0.1;
  std::size_t max_len = 100;
  std::size_t n_context = 1;
  double copy_bias_init = -1.0;

  std::size_t max_tokens = 256;
  std::size_t base_epochs = 15;
  double base_lr = 2e-3;
  std::size_t base_warmup = 200;
  std::size_t finetune_epochs = 8;
  double finetune_lr = 1e-3;
  bool full_finetune = false;
  bool gold_target_context = true;

  std::size_t beam_width = 1;
  double length_penalty = 1.0;
  bool two_to_two = false;  // also train and score the concatenation baseline
};

// Built-in toy profile (the defaults above).
ExperimentSettings toy_profile();

// Sets one key; throws DataError naming the key on an unknown key or bad value.
void apply_setting(ExperimentSettings& settings, const std::string& key, const std::string& value);
// "key = value" lines, '#' comments, blank lines ignored.
void apply_settings_file(ExperimentSettings& settings, std::istream& in);
void apply_settings_file(ExperimentSettings& settings, const std::string& path);
std::map<std::string, std::string> settings_map(const ExperimentSettings& settings);

ModelConfig model_config(const ExperimentSettings& s, std::size_t vocab_src, std::size_t vocab_tgt);
TrainConfig base_train_config(const ExperimentSettings& s);
TrainConfig finetune_config(const ExperimentSettings& s, Stage stage);

struct SynthSplits {
  SynthCorpus train, valid, test;
};
SynthSplits make_synthetic_splits(const ExperimentSettings& s);

struct ExperimentResult {
  std::vector<SystemScores> systems;  // sentence, han-joint, copy (+ two-to-two)
  LcReport reference;
  std::string table;
  std::string records;
  std::map<std::string, std::vector<EpochRecord>> histories;
  std::map<std::string, std::vector<TokenDocument>> translations;
  bool aborted = false;
  std::string diagnostic;

  const SystemScores& system(const std::string& name) const;
};

// Generate, train the base, fine-tune HAN encoder, HAN joint and copy, translate
// the test documents with each system and score them. When `output_dir` is
// non-empty, corpora, vocabularies, checkpoints, logs, translations and the
// report are written there.
ExperimentResult run_experiment(const ExperimentSettings& settings, const std::string& output_dir = "",
                                std::ostream* progress = nullptr);

// Greedy or beam translation of every document, decoded to tokens.
std::vector<TokenDocument> translate_corpus(const Model& model, const DocumentCorpus& corpus,
                                            const Vocabulary& source_vocab, const Vocabulary& target_vocab,
                                            const TranslateOptions& options);

}  // namespace copyhan
