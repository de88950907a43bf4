#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "copyhan/copy.hpp"
#include "copyhan/grad_check.hpp"
#include "copyhan/han.hpp"
#include "copyhan/transformer.hpp"

namespace copyhan {

enum class Variant { Sentence, HanEncoder, HanDecoder, HanJoint, Copy };

std::string to_string(Variant v);
Variant variant_from_string(const std::string& s);
bool uses_source_context(Variant v);
bool uses_target_context(Variant v);

// Training stage a parameter belongs to.
enum class ParamGroup { Base, HanEncoder, HanDecoder, Copy };

std::string to_string(ParamGroup g);
ParamGroup param_group_from_string(const std::string& s);

struct ModelConfig {
  TransformerConfig transformer;
  std::size_t n_context = 1;
  CopyOptions copy;
  // Initial value of the copy-gate bias b.
  double copy_bias_init = -1.0;

  void validate() const;
};

struct NamedParam {
  std::string name;
  ParamGroup group;
  Tensor value;
};

struct EncoderOutput {
  EncodedSentence encoded;  // h~_enc, after source-context integration
  Tensor base_states;       // final encoder layer before integration (what D_x caches)
  HanOutput han;
};

struct DecoderOutput {
  Tensor hidden;       // h_t rows, final decoder layer
  Tensor integrated;   // h~_t rows
  HanOutput han;       // target-side integration
  Tensor source_context;  // c_t (copy variant with non-empty D_y)
  Tensor p_copy;          // [rows x 1], same condition
  Tensor alpha;           // [rows x vocab], same condition
  Tensor p_vocab;
  Tensor p_out;           // P_w; same handle as p_vocab when copying is inactive
  std::vector<Tensor> cross_weights;
};

struct DecodeOptions {
  // Clamp p_copy to zero (the copy model then reduces to HAN joint).
  bool force_copy_off = false;
};

// Per-position record of everything the copy-HAN decoder computed.
struct DecoderStepTrace {
  std::vector<double> hidden;
  std::vector<double> integrated;
  std::vector<double> doc_context;
  std::vector<double> gate;
  std::vector<double> source_context;
  double p_copy = 0.0;
  AttentionTrace attention;
  std::vector<double> alpha;
  std::vector<double> p_vocab;
  std::vector<double> p_out;
};

// Copy-augmented hierarchical-attention Transformer. Every parameter group is
// always allocated; `present_groups` records which ones hold trained or loaded
// values.
class Model {
 public:
  Model(ModelConfig config, std::uint64_t init_seed);
  Model(const Model&) = delete;
  Model& operator=(const Model&) = delete;
  Model(Model&&) = default;
  Model& operator=(Model&&) = default;

  // Deep copy of configuration and parameter values.
  Model clone() const;

  const ModelConfig& config() const noexcept { return config_; }
  Variant variant() const noexcept { return variant_; }
  void set_variant(Variant v) noexcept { variant_ = v; }
  const std::set<ParamGroup>& present_groups() const noexcept { return present_; }
  void mark_present(ParamGroup g) { present_.insert(g); }
  bool has_group(ParamGroup g) const { return present_.count(g) != 0; }

  const std::vector<NamedParam>& params() const noexcept { return params_; }
  std::vector<NamedTensor> group_tensors(const std::set<ParamGroup>& groups) const;
  // Only the listed groups record gradients afterwards.
  void set_trainable(const std::set<ParamGroup>& groups);
  void zero_grad();
  // Re-draws one group from the given seed (used when a stage first needs it).
  void reinitialize(ParamGroup group, std::uint64_t seed);

  const TransformerParams& transformer() const noexcept { return transformer_; }
  const HanParams& han_encoder() const noexcept { return han_encoder_; }
  const HanParams& han_decoder() const noexcept { return han_decoder_; }
  const CopyParams& copy_params() const noexcept { return copy_; }

  // Base encoder, then D_x integration at the final layer for source-context variants.
  EncoderOutput encode(const TokenIds& source, const ContextState& context, const ForwardMode& mode) const;

  // Decoder over the whole prefix, D_y integration, output distribution and copy mixture.
  DecoderOutput decode(const TokenIds& prefix, const EncodedSentence& encoded, const ContextState& context,
                       const ForwardMode& mode, const DecodeOptions& options = {}) const;

  // D_y entry for a finished translation (no BOS/EOS): final decoder states of a
  // teacher-forced pass, one row per output token: the state of the step that emitted it.
  CacheEntry target_cache_entry(const TokenIds& output, const EncodedSentence& encoded) const;

  DecoderStepTrace step_trace(const DecoderOutput& out, std::size_t row) const;

 private:
  void build(std::uint64_t init_seed);
  Tensor& add_param(const std::string& name, ParamGroup group, Shape shape);
  void init_group(ParamGroup group, std::uint64_t seed);

  ModelConfig config_;
  Variant variant_ = Variant::Sentence;
  std::set<ParamGroup> present_{ParamGroup::Base};
  std::vector<NamedParam> params_;
  std::map<std::string, std::string> init_kind_;
  TransformerParams transformer_;
  HanParams han_encoder_;
  HanParams han_decoder_;
  CopyParams copy_;
};

// Contextual entry points used by the document decoder and tests.
EncodedSentence contextual_encode(const Model& model, const TokenIds& source, const ContextState& context,
                                  const ForwardMode& mode = {});

struct ContextualStep {
  Tensor integrated;  // [1 x d]
  AttentionTrace attention;
  DecoderStepTrace trace;
};

ContextualStep contextual_decode_step(const Model& model, const TokenIds& prefix, const EncodedSentence& encoded,
                                      const ContextState& context, const ForwardMode& mode = {});

// Checkpoint container: magic, format version, a key=value header with the
// configuration, then named little-endian float64 arrays.
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct CheckpointInfo {
  ModelConfig config;
  Variant variant = Variant::Sentence;
  std::string stage;
  std::set<ParamGroup> groups;
  std::map<std::string, std::string> header;
};

void save_checkpoint(const Model& model, const std::string& stage, std::ostream& out);
void save_checkpoint(const Model& model, const std::string& stage, const std::string& path);
// Rebuilds the model from the header and verifies every array against the
// shape manifest implied by that configuration. Throws DataError on mismatch.
Model load_checkpoint(std::istream& in, CheckpointInfo* info = nullptr);
Model load_checkpoint(const std::string& path, CheckpointInfo* info = nullptr);

}  // namespace copyhan
