#include "copyhan/training.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>

#include "copyhan/decoder.hpp"
#include "copyhan/errors.hpp"
#include "copyhan/ops.hpp"
#include "copyhan/seeds.hpp"

namespace copyhan {

Adam::Adam(std::vector<NamedTensor> params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.value.numel(), 0.0);
    v_.emplace_back(p.value.numel(), 0.0);
  }
}

void Adam::step(double learning_rate) {
  ++t_;
  const double t = static_cast<double>(t_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& value = params_[i].value;
    const bool has = value.has_grad();
    std::span<const double> g = has ? value.grad() : std::span<const double>{};
    auto w = value.mutable_data();
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t k = 0; k < w.size(); ++k) {
      const double gk = has ? g[k] : 0.0;
      m[k] = config_.beta1 * m[k] + (1.0 - config_.beta1) * gk;
      v[k] = config_.beta2 * v[k] + (1.0 - config_.beta2) * gk * gk;
      w[k] -= learning_rate * (m[k] / c1) / (std::sqrt(v[k] / c2) + config_.epsilon);
    }
  }
}

std::string to_string(Stage s) {
  switch (s) {
    case Stage::Base: return "base";
    case Stage::HanEncoder: return "han-encoder";
    case Stage::HanDecoder: return "han-decoder";
    case Stage::HanJoint: return "han-joint";
    case Stage::Copy: return "copy";
  }
  return "?";
}

Stage stage_from_string(const std::string& s) {
  for (Stage st : {Stage::Base, Stage::HanEncoder, Stage::HanDecoder, Stage::HanJoint, Stage::Copy})
    if (to_string(st) == s) return st;
  throw DataError("unknown stage '" + s + "' (base, han-encoder, han-decoder, han-joint, copy)");
}

Variant stage_variant(Stage s) {
  switch (s) {
    case Stage::Base: return Variant::Sentence;
    case Stage::HanEncoder: return Variant::HanEncoder;
    case Stage::HanDecoder: return Variant::HanDecoder;
    case Stage::HanJoint: return Variant::HanJoint;
    case Stage::Copy: return Variant::Copy;
  }
  return Variant::Sentence;
}

std::set<ParamGroup> stage_groups(Stage s) {
  switch (s) {
    case Stage::Base: return {ParamGroup::Base};
    case Stage::HanEncoder: return {ParamGroup::HanEncoder};
    case Stage::HanDecoder:
    case Stage::HanJoint: return {ParamGroup::HanDecoder};
    case Stage::Copy: return {ParamGroup::HanDecoder, ParamGroup::Copy};
  }
  return {};
}

std::set<ParamGroup> stage_prerequisites(Stage s) {
  switch (s) {
    case Stage::Base: return {};
    case Stage::HanEncoder:
    case Stage::HanDecoder: return {ParamGroup::Base};
    case Stage::HanJoint:
    case Stage::Copy: return {ParamGroup::Base, ParamGroup::HanEncoder};
  }
  return {};
}

double LearningRate::at(std::size_t step) const {
  if (kind == Kind::Constant || warmup == 0) return peak;
  const double s = static_cast<double>(std::max<std::size_t>(step, 1));
  const double w = static_cast<double>(warmup);
  return peak * std::min(s / w, std::sqrt(w / s));
}

namespace {

TokenIds with_bos(const TokenIds& target) {
  TokenIds prefix{kBosId};
  prefix.insert(prefix.end(), target.begin(), target.end());
  return prefix;
}

TokenIds with_eos(const TokenIds& target) {
  TokenIds gold = target;
  gold.push_back(kEosId);
  return gold;
}

// D_x/D_y bookkeeping after an example, in eval mode on the pre-update caches.
void advance_context(ContextState& context, const Model& model, const Example& ex, bool gold_target) {
  NoGradGuard no_grad;
  const auto enc = model.encode(ex.source, context, ForwardMode::eval());
  TokenIds output = ex.target;
  if (!gold_target && uses_target_context(model.variant())) {
    TranslateOptions opts;
    output = translate_sentence(model, enc.encoded, context, {kBosId}, max_output_length(ex.source.size()), opts)
                 .output;
  }
  update_context(context, model, enc, output);
}

std::string format_loss(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

void log_epoch(const TrainConfig& config, const EpochRecord& r) {
  if (!config.log) return;
  const std::string label = config.log_stage.empty() ? to_string(config.stage) : config.log_stage;
  *config.log << label << '\t' << r.epoch << '\t' << format_loss(r.train_loss) << '\t' << format_loss(r.val_loss)
              << '\t' << format_loss(r.mean_p_copy) << '\n';
  config.log->flush();
}

}  // namespace

ValidationStats validation_loss(const Model& model, const DocumentCorpus& corpus, const Vocabulary& source_vocab,
                                const Vocabulary& target_vocab, BatchMode mode, std::size_t max_len) {
  NoGradGuard no_grad;
  BatchOptions opts;
  opts.mode = mode;
  opts.max_len = max_len;
  opts.max_tokens = std::numeric_limits<std::size_t>::max() / 2;
  opts.shuffle = false;
  const auto batches = make_batches(corpus, source_vocab, target_vocab, opts);

  ValidationStats stats;
  double nll = 0.0, copy_sum = 0.0;
  const bool contextual = model.variant() != Variant::Sentence;
  ContextState context(model.config().n_context);
  for (const auto& batch : batches) {
    for (const auto& ex : batch.examples) {
      if (ex.document_start) context.clear();
      const auto enc = model.encode(ex.source, context, ForwardMode::eval());
      const auto out = model.decode(with_bos(ex.target), enc.encoded, context, ForwardMode::eval());
      const TokenIds gold = with_eos(ex.target);
      for (std::size_t r = 0; r < gold.size(); ++r) {
        nll -= std::log(std::max(out.p_out.at(r, static_cast<std::size_t>(gold[r])), kProbabilityFloor));
      }
      stats.tokens += gold.size();
      if (out.p_copy.defined()) {
        for (std::size_t r = 0; r < out.p_copy.rows(); ++r) copy_sum += out.p_copy.at(r, 0);
        stats.copy_positions += out.p_copy.rows();
      }
      if (contextual) update_context(context, model, enc, ex.target);
    }
  }
  stats.loss = stats.tokens ? nll / static_cast<double>(stats.tokens) : 0.0;
  stats.mean_p_copy = stats.copy_positions ? copy_sum / static_cast<double>(stats.copy_positions) : 0.0;
  return stats;
}

BatchLoss accumulate_batch_gradients(Model& model, const Batch& batch, ContextState& context,
                                     const TrainConfig& config, std::mt19937_64& dropout_rng) {
  BatchLoss result;
  const bool contextual = model.variant() != Variant::Sentence;
  const double denom = static_cast<double>(std::max<std::size_t>(batch.target_tokens, 1));
  for (const auto& ex : batch.examples) {
    if (ex.document_start) context.clear();
    const ForwardMode mode = ForwardMode::train(dropout_rng);
    const auto enc = model.encode(ex.source, context, mode);
    const auto out = model.decode(with_bos(ex.target), enc.encoded, context, mode);
    const TokenIds gold = with_eos(ex.target);
    const auto ce = cross_entropy(out.p_out, gold, config.label_smoothing);
    const double loss = ce.loss.item();
    if (!std::isfinite(loss)) {
      result.finite = false;
      return result;
    }
    const double T = static_cast<double>(gold.size());
    scale(ce.loss, T / denom).backward();
    result.loss_sum += loss * T;
    result.tokens += gold.size();
    if (contextual) advance_context(context, model, ex, config.gold_target_context);
  }
  return result;
}

TrainResult train_stage(Model model, const TrainData& data, const TrainConfig& config) {
  if (!data.train || !data.valid || !data.source_vocab || !data.target_vocab) {
    throw ContractError("training needs train and validation corpora and both vocabularies");
  }
  for (ParamGroup g : stage_prerequisites(config.stage)) {
    if (!model.has_group(g)) {
      throw DataError("stage " + to_string(config.stage) + " needs a checkpoint holding " + to_string(g) +
                      " parameters");
    }
  }
  model.set_variant(stage_variant(config.stage));
  std::set<ParamGroup> trainable = stage_groups(config.stage);
  for (ParamGroup g : trainable) {
    if (!model.has_group(g)) {
      model.reinitialize(g, config.init_seed);
      model.mark_present(g);
    }
  }
  if (config.full_finetune) {
    for (ParamGroup g : stage_prerequisites(config.stage)) trainable.insert(g);
  }
  model.set_trainable(trainable);

  const BatchMode mode = config.stage == Stage::Base ? config.base_batching : BatchMode::DocumentOrdered;
  const auto validate = [&](const Model& m) {
    return validation_loss(m, *data.valid, *data.source_vocab, *data.target_vocab, mode, config.max_len);
  };

  std::vector<EpochRecord> history;
  const auto v0 = validate(model);
  history.push_back({0, std::numeric_limits<double>::quiet_NaN(), v0.loss, v0.mean_p_copy});
  log_epoch(config, history.back());

  Model best = model.clone();
  double best_loss = v0.loss;
  std::size_t best_epoch = 0;
  Model last_finite = model.clone();

  Adam adam(model.group_tensors(trainable), config.adam);
  std::mt19937_64 dropout_rng(derive_seed(config.seed, "dropout"));
  ContextState context(model.config().n_context);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    BatchOptions bo;
    bo.mode = mode;
    bo.max_tokens = config.max_tokens;
    bo.max_len = config.max_len;
    bo.shuffle = true;
    bo.seed = derive_seed(config.seed, "batches", epoch);
    const auto batches = make_batches(*data.train, *data.source_vocab, *data.target_vocab, bo);

    double loss_sum = 0.0;
    std::size_t tokens = 0;
    std::string failure;
    context.clear();
    for (const auto& batch : batches) {
      model.zero_grad();
      const auto bl = accumulate_batch_gradients(model, batch, context, config, dropout_rng);
      if (!bl.finite) {
        failure = "non-finite training loss in epoch " + std::to_string(epoch) + " after " +
                  std::to_string(adam.steps()) + " updates";
        break;
      }
      adam.step(config.lr.at(adam.steps() + 1));
      loss_sum += bl.loss_sum;
      tokens += bl.tokens;
    }
    EpochRecord rec{epoch, tokens ? loss_sum / static_cast<double>(tokens) : 0.0, 0.0, 0.0};
    if (failure.empty()) {
      const auto v = validate(model);
      rec.val_loss = v.loss;
      rec.mean_p_copy = v.mean_p_copy;
      if (!std::isfinite(v.loss)) failure = "non-finite validation loss after epoch " + std::to_string(epoch);
    }
    if (!failure.empty()) {
      model.zero_grad();
      last_finite.set_trainable({});
      const std::string diagnostic = failure + "; returning epoch " + std::to_string(history.back().epoch);
      return TrainResult{std::move(last_finite), std::move(history), best_epoch, true, diagnostic};
    }
    history.push_back(rec);
    log_epoch(config, rec);
    last_finite = model.clone();
    if (rec.val_loss < best_loss) {
      best_loss = rec.val_loss;
      best_epoch = epoch;
      best = model.clone();
    }
  }
  best.set_trainable({});
  return TrainResult{std::move(best), std::move(history), best_epoch, false, {}};
}

TrainResult train_base(Model model, const TrainData& data, TrainConfig config) {
  config.stage = Stage::Base;
  return train_stage(std::move(model), data, config);
}

TrainResult finetune_han(Model model, const TrainData& data, Variant variant, TrainConfig config) {
  switch (variant) {
    case Variant::HanEncoder: config.stage = Stage::HanEncoder; break;
    case Variant::HanDecoder: config.stage = Stage::HanDecoder; break;
    case Variant::HanJoint: config.stage = Stage::HanJoint; break;
    default: throw ContractError("finetune_han takes han-encoder, han-decoder or han-joint, got " + to_string(variant));
  }
  return train_stage(std::move(model), data, config);
}

TrainResult finetune_copy(Model model, const TrainData& data, TrainConfig config) {
  config.stage = Stage::Copy;
  return train_stage(std::move(model), data, config);
}

}  // namespace copyhan
