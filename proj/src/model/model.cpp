#include "copyhan/model.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "copyhan/errors.hpp"
#include "copyhan/ops.hpp"

namespace copyhan {

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Sentence: return "sentence";
    case Variant::HanEncoder: return "han-encoder";
    case Variant::HanDecoder: return "han-decoder";
    case Variant::HanJoint: return "han-joint";
    case Variant::Copy: return "copy";
  }
  return "unknown";
}

Variant variant_from_string(const std::string& s) {
  for (Variant v : {Variant::Sentence, Variant::HanEncoder, Variant::HanDecoder, Variant::HanJoint, Variant::Copy}) {
    if (to_string(v) == s) return v;
  }
  throw DataError("unknown model variant '" + s + "'");
}

bool uses_source_context(Variant v) {
  return v == Variant::HanEncoder || v == Variant::HanJoint || v == Variant::Copy;
}

bool uses_target_context(Variant v) {
  return v == Variant::HanDecoder || v == Variant::HanJoint || v == Variant::Copy;
}

std::string to_string(ParamGroup g) {
  switch (g) {
    case ParamGroup::Base: return "base";
    case ParamGroup::HanEncoder: return "han-encoder";
    case ParamGroup::HanDecoder: return "han-decoder";
    case ParamGroup::Copy: return "copy";
  }
  return "unknown";
}

ParamGroup param_group_from_string(const std::string& s) {
  for (ParamGroup g : {ParamGroup::Base, ParamGroup::HanEncoder, ParamGroup::HanDecoder, ParamGroup::Copy}) {
    if (to_string(g) == s) return g;
  }
  throw DataError("unknown parameter group '" + s + "'");
}

void ModelConfig::validate() const {
  transformer.validate();
  if (n_context == 0) throw ContractError("context size n must be at least 1");
}

namespace {

enum class Init { Xavier, Embedding, Zeros, Ones, CopyBias };

std::uint64_t group_seed(std::uint64_t seed, ParamGroup g) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(g) + 1u};
  std::uint64_t out = 0;
  std::vector<std::uint32_t> words(2);
  seq.generate(words.begin(), words.end());
  out = (static_cast<std::uint64_t>(words[0]) << 32) | words[1];
  return out;
}

Init init_of(const std::string& kind) {
  if (kind == "xavier") return Init::Xavier;
  if (kind == "embedding") return Init::Embedding;
  if (kind == "ones") return Init::Ones;
  if (kind == "copy_bias") return Init::CopyBias;
  return Init::Zeros;
}

}  // namespace

Model::Model(ModelConfig config, std::uint64_t init_seed) : config_(std::move(config)) {
  config_.validate();
  build(init_seed);
}

Tensor& Model::add_param(const std::string& name, ParamGroup group, Shape shape) {
  params_.push_back({name, group, Tensor::parameter(shape, std::vector<double>(shape_numel(shape), 0.0))});
  return params_.back().value;
}

void Model::build(std::uint64_t init_seed) {
  const auto& tc = config_.transformer;
  const std::size_t d = tc.d_model;
  params_.reserve(512);

  auto param = [&](const std::string& name, ParamGroup g, Shape shape, const char* kind) {
    init_kind_[name] = kind;
    return add_param(name, g, std::move(shape));
  };
  auto linear = [&](const std::string& name, ParamGroup g, std::size_t in, std::size_t out, bool bias) {
    Linear l;
    l.weight = param(name + ".weight", g, {in, out}, "xavier");
    if (bias) l.bias = param(name + ".bias", g, {1, out}, "zeros");
    return l;
  };
  auto attention = [&](const std::string& name, ParamGroup g) {
    MultiHeadParams p;
    p.wq = param(name + ".wq", g, {d, d}, "xavier");
    p.wk = param(name + ".wk", g, {d, d}, "xavier");
    p.wv = param(name + ".wv", g, {d, d}, "xavier");
    p.wo = param(name + ".wo", g, {d, d}, "xavier");
    p.bo = param(name + ".bo", g, {1, d}, "zeros");
    p.heads = tc.m_heads;
    return p;
  };
  auto norm = [&](const std::string& name, ParamGroup g) {
    return LayerNormParams{param(name + ".gain", g, {1, d}, "ones"), param(name + ".bias", g, {1, d}, "zeros")};
  };
  auto ffn = [&](const std::string& name, ParamGroup g) {
    return FeedForwardParams{linear(name + ".inner", g, d, tc.d_ff, true), linear(name + ".outer", g, tc.d_ff, d, true)};
  };
  auto han = [&](const std::string& name, ParamGroup g) {
    HanParams h;
    h.word_query = linear(name + ".word_query", g, d, d, true);
    h.sentence_query = linear(name + ".sentence_query", g, d, d, true);
    // Zero queries: attention over the cache starts uniform.
    init_kind_[name + ".word_query.weight"] = "zeros";
    init_kind_[name + ".sentence_query.weight"] = "zeros";
    h.word_attn = attention(name + ".word_attn", g);
    h.sentence_attn = attention(name + ".sentence_attn", g);
    h.ffn = ffn(name + ".ffn", g);
    h.gate_hidden = param(name + ".gate_hidden", g, {d, d}, "xavier");
    h.gate_context = param(name + ".gate_context", g, {d, d}, "xavier");
    return h;
  };

  const ParamGroup base = ParamGroup::Base;
  transformer_.src_embedding = param("src_embedding", base, {tc.vocab_src, d}, "embedding");
  transformer_.tgt_embedding = param("tgt_embedding", base, {tc.vocab_tgt, d}, "embedding");
  for (std::size_t l = 0; l < tc.n_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    transformer_.encoder.push_back(
        {attention(p + ".self_attn", base), norm(p + ".norm_attn", base), ffn(p + ".ffn", base), norm(p + ".norm_ffn", base)});
  }
  for (std::size_t l = 0; l < tc.n_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    transformer_.decoder.push_back({attention(p + ".self_attn", base), norm(p + ".norm_self", base),
                                    attention(p + ".cross_attn", base), norm(p + ".norm_cross", base),
                                    ffn(p + ".ffn", base), norm(p + ".norm_ffn", base)});
  }
  transformer_.output = linear("output", base, d, tc.vocab_tgt, true);

  han_encoder_ = han("han_enc", ParamGroup::HanEncoder);
  han_decoder_ = han("han_dec", ParamGroup::HanDecoder);

  copy_.w_state = param("copy.w_state", ParamGroup::Copy, {d, 1}, "xavier");
  copy_.w_source = param("copy.w_source", ParamGroup::Copy, {d, 1}, "xavier");
  copy_.w_context = param("copy.w_context", ParamGroup::Copy, {d, 1}, "xavier");
  copy_.bias = param("copy.bias", ParamGroup::Copy, {1, 1}, "copy_bias");
  copy_.source_attn = attention("copy.source_attn", ParamGroup::Copy);

  for (ParamGroup g : {ParamGroup::Base, ParamGroup::HanEncoder, ParamGroup::HanDecoder, ParamGroup::Copy}) {
    init_group(g, group_seed(init_seed, g));
  }
}

void Model::init_group(ParamGroup group, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  const double d = static_cast<double>(config_.transformer.d_model);
  for (NamedParam& p : params_) {
    if (p.group != group) continue;
    auto data = p.value.mutable_data();
    switch (init_of(init_kind_.at(p.name))) {
      case Init::Xavier: {
        const Shape& s = p.value.shape();
        const double limit = std::sqrt(6.0 / static_cast<double>(s[0] + s[1]));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (double& v : data) v = u(rng);
        break;
      }
      case Init::Embedding: {
        std::normal_distribution<double> n(0.0, 1.0 / std::sqrt(d));
        for (double& v : data) v = n(rng);
        break;
      }
      case Init::Zeros: std::fill(data.begin(), data.end(), 0.0); break;
      case Init::Ones: std::fill(data.begin(), data.end(), 1.0); break;
      case Init::CopyBias: std::fill(data.begin(), data.end(), config_.copy_bias_init); break;
    }
  }
}

void Model::reinitialize(ParamGroup group, std::uint64_t seed) { init_group(group, group_seed(seed, group)); }

Model Model::clone() const {
  Model m(config_, 0);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto src = params_[i].value.data();
    auto dst = m.params_[i].value.mutable_data();
    std::copy(src.begin(), src.end(), dst.begin());
  }
  m.variant_ = variant_;
  m.present_ = present_;
  return m;
}

std::vector<NamedTensor> Model::group_tensors(const std::set<ParamGroup>& groups) const {
  std::vector<NamedTensor> out;
  for (const NamedParam& p : params_) {
    if (groups.count(p.group)) out.push_back({p.name, p.value});
  }
  return out;
}

void Model::set_trainable(const std::set<ParamGroup>& groups) {
  for (NamedParam& p : params_) {
    p.value.zero_grad();
    p.value.set_requires_grad(groups.count(p.group) != 0);
  }
}

void Model::zero_grad() {
  for (NamedParam& p : params_) p.value.zero_grad();
}

EncoderOutput Model::encode(const TokenIds& source, const ContextState& context, const ForwardMode& mode) const {
  EncoderOutput out;
  out.encoded = encode_sentence(source, transformer_, config_.transformer, mode);
  out.base_states = out.encoded.states;
  if (uses_source_context(variant_)) {
    out.han = apply_han(out.base_states, context.source(), han_encoder_);
    out.encoded.states = out.han.integrated;
  } else {
    out.han.integrated = out.base_states;
  }
  return out;
}

DecoderOutput Model::decode(const TokenIds& prefix, const EncodedSentence& encoded, const ContextState& context,
                            const ForwardMode& mode, const DecodeOptions& options) const {
  DecoderOutput out;
  auto pass = decoder_states(prefix, encoded, transformer_, config_.transformer, mode);
  out.hidden = pass.states;
  out.cross_weights = std::move(pass.cross_weights);
  if (uses_target_context(variant_)) {
    out.han = apply_han(out.hidden, context.target(), han_decoder_);
  } else {
    out.han.integrated = out.hidden;
  }
  out.integrated = out.han.integrated;
  out.p_vocab = output_distribution(out.integrated, transformer_);
  out.p_out = out.p_vocab;

  if (variant_ == Variant::Copy && out.han.applied) {
    out.alpha = copy_alpha(out.han.attention, cache_tokens(context.target()), config_.transformer.vocab_tgt,
                           config_.copy);
    if (out.alpha.defined()) {
      out.source_context = encoder_context_attention(out.integrated, encoded, copy_).output;
      out.p_copy = options.force_copy_off ? Tensor::zeros({out.integrated.rows(), 1})
                                          : copy_gate(out.integrated, out.source_context, out.han.context, copy_);
      out.p_out = mix_distributions(out.p_vocab, out.alpha, out.p_copy);
    }
  }
  return out;
}

CacheEntry Model::target_cache_entry(const TokenIds& output, const EncodedSentence& encoded) const {
  if (output.empty()) throw ContractError("target cache entry for an empty translation");
  NoGradGuard no_grad;
  TokenIds prefix;
  prefix.reserve(output.size() + 1);
  prefix.push_back(kBosId);
  prefix.insert(prefix.end(), output.begin(), output.end());
  auto pass = decoder_states(prefix, encoded, transformer_, config_.transformer, ForwardMode::eval());
  return {output, slice_rows(pass.states, 0, output.size()).detach()};
}

DecoderStepTrace Model::step_trace(const DecoderOutput& out, std::size_t row) const {
  DecoderStepTrace t;
  t.hidden = out.hidden.row_values(row);
  t.integrated = out.integrated.row_values(row);
  if (out.han.applied) {
    t.doc_context = out.han.context.row_values(row);
    t.gate = out.han.gate.row_values(row);
    t.attention = trace_row(out.han.attention, row);
  }
  if (out.p_copy.defined()) {
    t.p_copy = out.p_copy.at(row, 0);
    t.source_context = out.source_context.row_values(row);
    t.alpha = out.alpha.row_values(row);
  } else {
    t.alpha.assign(out.p_vocab.cols(), 0.0);
  }
  t.p_vocab = out.p_vocab.row_values(row);
  t.p_out = out.p_out.row_values(row);
  return t;
}

EncodedSentence contextual_encode(const Model& model, const TokenIds& source, const ContextState& context,
                                  const ForwardMode& mode) {
  return model.encode(source, context, mode).encoded;
}

ContextualStep contextual_decode_step(const Model& model, const TokenIds& prefix, const EncodedSentence& encoded,
                                      const ContextState& context, const ForwardMode& mode) {
  auto out = model.decode(prefix, encoded, context, mode);
  const std::size_t last = prefix.size() - 1;
  ContextualStep step;
  step.integrated = slice_rows(out.integrated, last, 1);
  step.trace = model.step_trace(out, last);
  step.attention = step.trace.attention;
  return step;
}

}  // namespace copyhan
