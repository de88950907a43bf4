#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

#include "copyhan/corpus.hpp"
#include "copyhan/model.hpp"

namespace copyhan {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

// Adam with bias correction. Parameters without a gradient this step are
// treated as having a zero gradient.
class Adam {
 public:
  Adam(std::vector<NamedTensor> params, AdamConfig config = {});

  void step(double learning_rate);
  std::size_t steps() const noexcept { return t_; }

 private:
  std::vector<NamedTensor> params_;
  AdamConfig config_;
  std::vector<std::vector<double>> m_, v_;
  std::size_t t_ = 0;
};

enum class Stage { Base, HanEncoder, HanDecoder, HanJoint, Copy };

std::string to_string(Stage s);
Stage stage_from_string(const std::string& s);
Variant stage_variant(Stage s);
// Groups updated by a stage when the base is frozen.
std::set<ParamGroup> stage_groups(Stage s);
// Groups a model must already hold before the stage may start.
std::set<ParamGroup> stage_prerequisites(Stage s);

struct LearningRate {
  enum class Kind { InverseSqrtWarmup, Constant };
  Kind kind = Kind::Constant;
  double peak = 1e-3;
  std::size_t warmup = 400;

  // `step` counts optimizer updates from 1.
  double at(std::size_t step) const;
};

struct TrainConfig {
  Stage stage = Stage::Base;
  std::size_t epochs = 15;
  std::size_t max_tokens = 1024;
  std::size_t max_len = 100;
  LearningRate lr;
  double label_smoothing = 0.1;
  std::uint64_t seed = 1;  // batch order and dropout
  std::uint64_t init_seed = 1;  // for groups a stage creates
  BatchMode base_batching = BatchMode::Sentence;  // TwoToTwo trains the concatenation baseline
  bool full_finetune = false;  // also update base parameters in context stages
  bool gold_target_context = true;  // D_y during training: gold previous target, else the model's own greedy output
  AdamConfig adam;
  std::ostream* log = nullptr;  // "stage\tepoch\ttrain_loss\tval_loss\tmean_p_copy"
  std::string log_stage;  // label written in the log; defaults to the stage name
};

struct TrainData {
  const DocumentCorpus* train = nullptr;
  const DocumentCorpus* valid = nullptr;
  const Vocabulary* source_vocab = nullptr;
  const Vocabulary* target_vocab = nullptr;
};

struct EpochRecord {
  std::size_t epoch = 0;     // 0 is the starting point
  double train_loss = 0.0;   // per target token, smoothed objective; NaN for epoch 0
  double val_loss = 0.0;     // per target token, plain negative log-likelihood
  double mean_p_copy = 0.0;  // over validation positions with an active copy gate
};

struct TrainResult {
  Model model;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
  bool aborted = false;
  std::string diagnostic;
};

struct ValidationStats {
  double loss = 0.0;
  double mean_p_copy = 0.0;
  std::size_t tokens = 0;
  std::size_t copy_positions = 0;
};

// Eval-mode loss over documents in order with gold context, ε = 0.
ValidationStats validation_loss(const Model& model, const DocumentCorpus& corpus, const Vocabulary& source_vocab,
                                const Vocabulary& target_vocab, BatchMode mode = BatchMode::DocumentOrdered,
                                std::size_t max_len = 100);

struct BatchLoss {
  double loss_sum = 0.0;  // summed per-token objective
  std::size_t tokens = 0;
  bool finite = true;
};

// Forward and backward over one batch, accumulating gradients scaled by
// 1/target_tokens. `context` carries D_x/D_y across batches and is reset at
// every document start.
BatchLoss accumulate_batch_gradients(Model& model, const Batch& batch, ContextState& context,
                                     const TrainConfig& config, std::mt19937_64& dropout_rng);

// Runs one stage. Checks prerequisites, initialises groups the stage introduces,
// freezes the rest, and returns the lowest-validation-loss epoch (epoch 0
// included). A non-finite loss stops training and returns the last finite
// epoch's parameters with `aborted` set.
TrainResult train_stage(Model model, const TrainData& data, const TrainConfig& config);

TrainResult train_base(Model model, const TrainData& data, TrainConfig config);
TrainResult finetune_han(Model model, const TrainData& data, Variant variant, TrainConfig config);
TrainResult finetune_copy(Model model, const TrainData& data, TrainConfig config);

}  // namespace copyhan
