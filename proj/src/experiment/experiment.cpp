#include "copyhan/experiment.hpp"

#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <ostream>
#include <sstream>
#include <type_traits>

#include "copyhan/errors.hpp"
#include "copyhan/seeds.hpp"

namespace copyhan {

ExperimentSettings toy_profile() { return {}; }

namespace {

struct SettingField {
  const char* key;
  std::function<void(ExperimentSettings&, const std::string&)> set;
  std::function<std::string(const ExperimentSettings&)> get;
};

std::uint64_t parse_unsigned(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    if (!text.empty() && text[0] != '-') v = std::stoull(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) {
    throw DataError("setting '" + key + "' needs a non-negative integer, got '" + text + "'");
  }
  return v;
}

double parse_double(const std::string& key, const std::string& text) {
  std::size_t pos = 0;
  double v = 0.0;
  try {
    v = std::stod(text, &pos);
  } catch (const std::exception&) {
    pos = 0;
  }
  if (pos == 0 || pos != text.size()) throw DataError("setting '" + key + "' needs a number, got '" + text + "'");
  return v;
}

bool parse_bool(const std::string& key, const std::string& text) {
  if (text == "true" || text == "1" || text == "yes" || text == "on") return true;
  if (text == "false" || text == "0" || text == "no" || text == "off") return false;
  throw DataError("setting '" + key + "' needs true or false, got '" + text + "'");
}

template <typename T>
T parse_value(const std::string& key, const std::string& text) {
  if constexpr (std::is_same_v<T, bool>) {
    return parse_bool(key, text);
  } else if constexpr (std::is_floating_point_v<T>) {
    return parse_double(key, text);
  } else {
    return static_cast<T>(parse_unsigned(key, text));
  }
}

template <typename T>
std::string show(T v) {
  if constexpr (std::is_same_v<T, bool>) {
    return v ? "true" : "false";
  } else if constexpr (std::is_floating_point_v<T>) {
    std::ostringstream o;
    o.precision(17);
    o << v;
    return o.str();
  } else {
    return std::to_string(v);
  }
}

template <typename T>
SettingField field(const char* key, T ExperimentSettings::*member) {
  return {key, [key, member](ExperimentSettings& s, const std::string& v) { s.*member = parse_value<T>(key, v); },
          [member](const ExperimentSettings& s) { return show(s.*member); }};
}

const std::vector<SettingField>& fields() {
  using S = ExperimentSettings;
  static const std::vector<SettingField> f{
      field("seed", &S::seed),
      field("train_docs", &S::train_docs),
      field("valid_docs", &S::valid_docs),
      field("test_docs", &S::test_docs),
      field("n_concepts", &S::n_concepts),
      field("doc_len", &S::doc_len),
      field("first_sentence_cue", &S::first_sentence_cue),
      field("vocab_max", &S::vocab_max),
      field("d_model", &S::d_model),
      field("n_layers", &S::n_layers),
      field("m_heads", &S::m_heads),
      field("d_ff", &S::d_ff),
      field("dropout", &S::dropout),
      field("label_smoothing", &S::label_smoothing),
      field("max_len", &S::max_len),
      field("n_context", &S::n_context),
      field("copy_bias_init", &S::copy_bias_init),
      field("max_tokens", &S::max_tokens),
      field("base_epochs", &S::base_epochs),
      field("base_lr", &S::base_lr),
      field("base_warmup", &S::base_warmup),
      field("finetune_epochs", &S::finetune_epochs),
      field("finetune_lr", &S::finetune_lr),
      field("full_finetune", &S::full_finetune),
      field("gold_target_context", &S::gold_target_context),
      field("beam_width", &S::beam_width),
      field("length_penalty", &S::length_penalty),
      field("two_to_two", &S::two_to_two),
  };
  return f;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

}  // namespace

void apply_setting(ExperimentSettings& settings, const std::string& key, const std::string& value) {
  for (const auto& f : fields()) {
    if (key == f.key) {
      f.set(settings, value);
      return;
    }
  }
  throw DataError("unknown setting '" + key + "'");
}

void apply_settings_file(ExperimentSettings& settings, std::istream& in) {
  std::string line;
  std::size_t n = 0;
  while (std::getline(in, line)) {
    ++n;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ParseError("expected 'key = value'", n);
    try {
      apply_setting(settings, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
    } catch (const ParseError&) {
      throw;
    } catch (const DataError& e) {
      throw ParseError(e.what(), n);
    }
  }
}

void apply_settings_file(ExperimentSettings& settings, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config file " + path);
  apply_settings_file(settings, in);
}

std::map<std::string, std::string> settings_map(const ExperimentSettings& settings) {
  std::map<std::string, std::string> out;
  for (const auto& f : fields()) out[f.key] = f.get(settings);
  return out;
}

ModelConfig model_config(const ExperimentSettings& s, std::size_t vocab_src, std::size_t vocab_tgt) {
  ModelConfig c;
  c.transformer.d_model = s.d_model;
  c.transformer.n_layers = s.n_layers;
  c.transformer.m_heads = s.m_heads;
  c.transformer.d_ff = s.d_ff;
  c.transformer.vocab_src = vocab_src;
  c.transformer.vocab_tgt = vocab_tgt;
  c.transformer.dropout = s.dropout;
  c.transformer.label_smoothing = s.label_smoothing;
  // Room for two-to-two concatenations.
  c.transformer.max_len = 2 * s.max_len + 2;
  c.n_context = s.n_context;
  c.copy_bias_init = s.copy_bias_init;
  c.validate();
  return c;
}

TrainConfig base_train_config(const ExperimentSettings& s) {
  TrainConfig t;
  t.stage = Stage::Base;
  t.epochs = s.base_epochs;
  t.max_tokens = s.max_tokens;
  t.max_len = s.max_len;
  t.lr = {LearningRate::Kind::InverseSqrtWarmup, s.base_lr, s.base_warmup};
  t.label_smoothing = s.label_smoothing;
  t.seed = derive_seed(s.seed, "dropout");
  t.init_seed = derive_seed(s.seed, "init");
  return t;
}

TrainConfig finetune_config(const ExperimentSettings& s, Stage stage) {
  TrainConfig t = base_train_config(s);
  t.stage = stage;
  t.epochs = s.finetune_epochs;
  t.lr = {LearningRate::Kind::Constant, s.finetune_lr, 0};
  t.seed = derive_seed(s.seed, "dropout", static_cast<std::uint64_t>(stage));
  t.init_seed = derive_seed(s.seed, "init", static_cast<std::uint64_t>(stage));
  t.full_finetune = s.full_finetune;
  t.gold_target_context = s.gold_target_context;
  return t;
}

SynthSplits make_synthetic_splits(const ExperimentSettings& s) {
  const auto split = [&](std::size_t n, const char* name, const char* prefix) {
    SynthOptions o;
    o.n_docs = n;
    o.doc_len = s.doc_len;
    o.n_concepts = s.n_concepts;
    o.first_sentence_cue = s.first_sentence_cue;
    o.seed = derive_seed(s.seed, std::string("data/") + name);
    o.id_prefix = prefix;
    return generate_synthetic_cohesion_corpus(o);
  };
  return {split(s.train_docs, "train", "train"), split(s.valid_docs, "valid", "valid"),
          split(s.test_docs, "test", "test")};
}

const SystemScores& ExperimentResult::system(const std::string& name) const {
  for (const auto& s : systems)
    if (s.name == name) return s;
  throw ContractError("no system named " + name);
}

std::vector<TokenDocument> translate_corpus(const Model& model, const DocumentCorpus& corpus,
                                            const Vocabulary& source_vocab, const Vocabulary& target_vocab,
                                            const TranslateOptions& options) {
  std::vector<TokenDocument> out;
  for (const auto& doc : corpus.documents) {
    std::vector<TokenIds> sources;
    for (const auto& s : doc.sentences) sources.push_back(source_vocab.encode(s.source));
    const auto t = translate_document(model, sources, options);
    TokenDocument d;
    for (const auto& ids : t.outputs) d.push_back(target_vocab.decode(ids));
    out.push_back(std::move(d));
  }
  return out;
}


ExperimentResult run_experiment(const ExperimentSettings& settings, const std::string& output_dir,
                                std::ostream* progress) {
  namespace fs = std::filesystem;
  const bool write = !output_dir.empty();
  const auto path = [&](const std::string& name) { return (fs::path(output_dir) / name).string(); };
  if (write) fs::create_directories(output_dir);

  const auto splits = make_synthetic_splits(settings);
  const auto& train = splits.train.corpus;
  const auto& valid = splits.valid.corpus;
  const auto& test = splits.test.corpus;
  const Vocabulary sv = Vocabulary::build(train, Side::Source, settings.vocab_max, 1, settings.two_to_two);
  const Vocabulary tv = Vocabulary::build(train, Side::Target, settings.vocab_max, 1, settings.two_to_two);
  const ModelConfig mc = model_config(settings, sv.size(), tv.size());
  const TrainData data{&train, &valid, &sv, &tv};

  std::ofstream log_file;
  std::ostringstream log_buffer;
  if (write) {
    write_corpus(train, path("train.src"), path("train.tgt"));
    write_corpus(valid, path("valid.src"), path("valid.tgt"));
    write_corpus(test, path("test.src"), path("test.tgt"));
    std::ofstream lex(path("lexicon.tsv"));
    write_lexicon(splits.train.lexicon, lex);
    std::ofstream concepts(path("test.concepts"));
    write_doc_concepts(splits.test, concepts);
    sv.save(path("vocab.src"));
    tv.save(path("vocab.tgt"));
    log_file.open(path("train.log"));
  }
  std::ostream& log = write ? static_cast<std::ostream&>(log_file) : log_buffer;

  ExperimentResult result;
  const auto note = [&](const std::string& what) {
    if (progress) *progress << what << std::endl;
  };
  const auto run = [&](const std::string& name, const std::function<TrainResult(TrainConfig)>& stage,
                       TrainConfig cfg) {
    note("training " + name);
    cfg.log = &log;
    cfg.log_stage = name;
    TrainResult r = stage(cfg);
    result.histories[name] = r.history;
    if (r.aborted && !result.aborted) {
      result.aborted = true;
      result.diagnostic = name + ": " + r.diagnostic;
    }
    if (write) save_checkpoint(r.model, name, path(name + ".ckpt"));
    return std::move(r.model);
  };

  Model base = run("base", [&](TrainConfig c) { return train_base(Model(mc, c.init_seed), data, c); },
                   base_train_config(settings));
  Model encoder = run("han-encoder",
                      [&](TrainConfig c) { return finetune_han(base.clone(), data, Variant::HanEncoder, c); },
                      finetune_config(settings, Stage::HanEncoder));
  Model joint = run("han-joint",
                    [&](TrainConfig c) { return finetune_han(encoder.clone(), data, Variant::HanJoint, c); },
                    finetune_config(settings, Stage::HanJoint));
  Model copy = run("copy", [&](TrainConfig c) { return finetune_copy(encoder.clone(), data, c); },
                   finetune_config(settings, Stage::Copy));

  TranslateOptions opts;
  opts.search = {settings.beam_width, settings.length_penalty};
  std::vector<std::pair<std::string, const Model*>> systems{
      {"sentence", &base}, {"han-joint", &joint}, {"copy", &copy}};

  std::optional<Model> two;
  TranslateOptions two_opts = opts;
  if (settings.two_to_two) {
    auto cfg = base_train_config(settings);
    cfg.base_batching = BatchMode::TwoToTwo;
    two.emplace(run("two-to-two", [&](TrainConfig c) { return train_base(Model(mc, c.init_seed), data, c); }, cfg));
    two_opts.two_to_two = true;
    two_opts.source_separator = sv.separator_id();
    two_opts.target_separator = tv.separator_id();
  }

  const auto references = token_documents(test, Side::Target);
  result.reference = lc_score(references);
  const auto score = [&](const std::string& name, const Model& model, const TranslateOptions& o) {
    note("translating with " + name);
    auto docs = translate_corpus(model, test, sv, tv, o);
    SystemScores s{name, bleu4(docs, references), lc_score(docs),
                   consistency_rate(docs, splits.test.lexicon, splits.test.doc_concept)};
    if (write) write_token_documents(docs, path("test." + name + ".tgt"));
    result.translations[name] = std::move(docs);
    result.systems.push_back(std::move(s));
  };
  for (const auto& [name, model] : systems) score(name, *model, opts);
  if (two) score("two-to-two", *two, two_opts);

  std::ostringstream table, records;
  write_report_table(table, result.systems, result.reference);
  write_report_records(records, result.systems, result.reference);
  result.table = table.str();
  result.records = records.str();
  if (write) {
    std::ofstream(path("report.txt")) << result.table;
    std::ofstream(path("metrics.txt")) << result.records;
  }
  return result;
}

}  // namespace copyhan
