#include "copyhan/selfcheck.hpp"

#include <random>

#include "copyhan/decoder.hpp"
#include "copyhan/seeds.hpp"

namespace copyhan {

ModelConfig gradcheck_toy_config() {
  ModelConfig c;
  c.transformer.d_model = 8;
  c.transformer.n_layers = 2;
  c.transformer.m_heads = 2;
  c.transformer.d_ff = 16;
  c.transformer.vocab_src = 13;
  c.transformer.vocab_tgt = 13;
  c.transformer.dropout = 0.0;
  c.transformer.max_len = 32;
  c.n_context = 2;
  return c;
}

GradCheckReport full_step_gradient_check(std::uint64_t seed, double tolerance, double step) {
  const std::set<ParamGroup> all{ParamGroup::Base, ParamGroup::HanEncoder, ParamGroup::HanDecoder, ParamGroup::Copy};
  Model model(gradcheck_toy_config(), derive_seed(seed, "init"));
  for (ParamGroup g : all) model.mark_present(g);
  model.set_variant(Variant::Copy);

  std::mt19937_64 rng(derive_seed(seed, "gradcheck"));
  std::uniform_real_distribution<double> jitter(-0.15, 0.15);
  for (const auto& p : model.params()) {
    Tensor t = p.value;
    for (double& v : t.mutable_data()) v += jitter(rng);
  }

  const auto word = [&] { return static_cast<TokenId>(kNumReserved + rng() % (13 - kNumReserved)); };
  ContextState context(2);
  for (int j = 0; j < 2; ++j) {
    TokenIds src, out;
    for (int i = 0; i < 3 + j; ++i) src.push_back(word());
    for (int i = 0; i < 4 - j; ++i) out.push_back(word());
    NoGradGuard no_grad;
    update_context(context, model, model.encode(src, context, ForwardMode::eval()), out);
  }
  TokenIds source{word(), word(), word()};
  // The first gold token is also cached, so the copy route carries weight.
  TokenIds gold{context.target().back().token_ids.front(), word(), word(), kEosId};
  TokenIds prefix{kBosId};
  prefix.insert(prefix.end(), gold.begin(), gold.end() - 1);

  model.set_trainable(all);
  const auto loss = [&] {
    const auto enc = model.encode(source, context, ForwardMode::eval());
    return cross_entropy(model.decode(prefix, enc.encoded, context, ForwardMode::eval()).p_out, gold, 0.1).loss;
  };
  return grad_check(loss, model.group_tensors(all), step, tolerance);
}

}  // namespace copyhan
