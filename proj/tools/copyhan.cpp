// copyhan: document-level translation with a copy-augmented HAN Transformer.
//
// Exit codes: 0 ok, 1 usage, 2 bad data, 3 numerical failure.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "copyhan/corpus.hpp"
#include "copyhan/decoder.hpp"
#include "copyhan/errors.hpp"
#include "copyhan/experiment.hpp"
#include "copyhan/metrics.hpp"
#include "copyhan/model.hpp"
#include "copyhan/selfcheck.hpp"
#include "copyhan/training.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace copyhan {
namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;
constexpr int kExitNumerical = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Settings shared by every subcommand that trains or generates.
struct SettingsFlags {
  std::string config;
  std::vector<std::string> overrides;
  std::uint64_t seed = 0;
  bool seed_given = false;
};

void add_settings_flags(CLI::App* cmd, SettingsFlags& f) {
  cmd->add_option("--config", f.config, "key = value settings file")->check(CLI::ExistingFile);
  cmd->add_option("--set", f.overrides, "key=value override (repeatable)");
  cmd->add_option("--seed", f.seed, "master seed")->each([&f](const std::string&) { f.seed_given = true; });
}

// toy profile < config file < --set < --seed
ExperimentSettings resolve(const SettingsFlags& f) {
  ExperimentSettings s = toy_profile();
  if (!f.config.empty()) apply_settings_file(s, f.config);
  for (const auto& kv : f.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    apply_setting(s, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (f.seed_given) s.seed = f.seed;
  return s;
}

std::string file_sha256(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return sha256_hex(buf.str());
}

class Manifest {
 public:
  explicit Manifest(std::string subcommand) { doc_["subcommand"] = std::move(subcommand); }

  void settings(const ExperimentSettings& s) {
    json cfg = json::object();
    for (const auto& [k, v] : settings_map(s)) cfg[k] = v;
    doc_["config"] = std::move(cfg);
    doc_["seed"] = s.seed;
  }
  void input(const std::string& key, const std::string& path) { doc_["inputs"][key] = path; }
  void output(const std::string& key, const std::string& path) { doc_["outputs"][key] = path; }
  void checkpoint(const std::string& path) { doc_["checkpoints"][path] = file_sha256(path); }
  json& metrics() { return doc_["metrics"]; }
  json& extra() { return doc_; }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path);
    out << doc_.dump(2) << '\n';
  }

 private:
  json doc_ = json::object();
};

json scores_json(const std::vector<SystemScores>& systems, const LcReport& reference) {
  json out = json::object();
  for (const auto& s : systems) {
    json j{{"bleu", s.bleu.score}, {"lc", s.lc.lc}, {"lc_delta", s.lc.lc - reference.lc}};
    if (s.consistency) j["consistency"] = s.consistency->rate;
    out[s.name] = std::move(j);
  }
  out["reference"] = json{{"lc", reference.lc}};
  return out;
}

// ---- gen-synth

struct GenSynthArgs {
  SettingsFlags settings;
  std::string out;
};

int gen_synth(const GenSynthArgs& a) {
  const auto s = resolve(a.settings);
  fs::create_directories(a.out);
  const auto path = [&](const std::string& n) { return (fs::path(a.out) / n).string(); };
  const auto splits = make_synthetic_splits(s);
  Manifest m("gen-synth");
  m.settings(s);
  const std::pair<const char*, const SynthCorpus*> parts[] = {
      {"train", &splits.train}, {"valid", &splits.valid}, {"test", &splits.test}};
  for (const auto& [name, synth] : parts) {
    const std::string n = name;
    write_corpus(synth->corpus, path(n + ".src"), path(n + ".tgt"));
    std::ofstream concepts(path(n + ".concepts"));
    write_doc_concepts(*synth, concepts);
    m.output(n + ".src", path(n + ".src"));
    m.output(n + ".tgt", path(n + ".tgt"));
    m.output(n + ".concepts", path(n + ".concepts"));
  }
  std::ofstream lex(path("lexicon.tsv"));
  write_lexicon(splits.train.lexicon, lex);
  m.output("lexicon", path("lexicon.tsv"));
  m.write(path("manifest.json"));
  std::cout << "wrote " << splits.train.corpus.documents.size() << "/" << splits.valid.corpus.documents.size()
            << "/" << splits.test.corpus.documents.size() << " train/valid/test documents to " << a.out << '\n';
  return kExitOk;
}

// ---- build-vocab

struct BuildVocabArgs {
  std::string src, tgt, out_src, out_tgt;
  std::size_t max_size = 1000;
  std::size_t min_freq = 1;
  bool separator = false;
};

int build_vocab(const BuildVocabArgs& a) {
  const auto corpus = load_corpus(a.src, a.tgt);
  const auto sv = Vocabulary::build(corpus, Side::Source, a.max_size, a.min_freq, a.separator);
  const auto tv = Vocabulary::build(corpus, Side::Target, a.max_size, a.min_freq, a.separator);
  sv.save(a.out_src);
  tv.save(a.out_tgt);
  Manifest m("build-vocab");
  m.input("src", a.src);
  m.input("tgt", a.tgt);
  m.output("vocab.src", a.out_src);
  m.output("vocab.tgt", a.out_tgt);
  m.extra()["config"] = json{{"max_size", a.max_size}, {"min_freq", a.min_freq}, {"separator", a.separator}};
  m.metrics() = json{{"source_size", sv.size()}, {"target_size", tv.size()}};
  m.write(a.out_tgt + ".manifest.json");
  std::cout << "source vocabulary " << sv.size() << ", target vocabulary " << tv.size() << '\n';
  return kExitOk;
}

// ---- train / finetune

struct TrainArgs {
  SettingsFlags settings;
  std::string train_src, train_tgt, valid_src, valid_tgt, vocab_src, vocab_tgt, out;
  std::string stage = "base";
  std::string init;
  bool two_to_two = false;
};

int train(const TrainArgs& a, bool finetune) {
  const auto s = resolve(a.settings);
  const auto train_corpus = load_corpus(a.train_src, a.train_tgt);
  const auto valid_corpus = load_corpus(a.valid_src, a.valid_tgt);
  const auto sv = Vocabulary::load(a.vocab_src);
  const auto tv = Vocabulary::load(a.vocab_tgt);
  if (a.two_to_two && (sv.separator_id() < 0 || tv.separator_id() < 0))
    throw DataError("--two-to-two needs vocabularies built with --separator");
  const TrainData data{&train_corpus, &valid_corpus, &sv, &tv};

  fs::create_directories(a.out);
  const auto path = [&](const std::string& n) { return (fs::path(a.out) / n).string(); };
  const Stage stage = finetune ? stage_from_string(a.stage) : Stage::Base;
  if (finetune && stage == Stage::Base) throw UsageError("finetune --stage must name a context stage");
  const std::string name = finetune ? a.stage : (a.two_to_two ? "two-to-two" : "base");
  std::ofstream log(path(name + ".log"));

  TrainConfig cfg = finetune ? finetune_config(s, stage) : base_train_config(s);
  cfg.log = &log;
  cfg.log_stage = name;
  if (a.two_to_two) cfg.base_batching = BatchMode::TwoToTwo;

  TrainResult r = [&] {
    if (!finetune) return train_base(Model(model_config(s, sv.size(), tv.size()), cfg.init_seed), data, cfg);
    Model init = load_checkpoint(a.init);
    if (init.config().transformer.vocab_src != sv.size() || init.config().transformer.vocab_tgt != tv.size())
      throw DataError("checkpoint " + a.init + " does not match the vocabulary sizes");
    if (stage == Stage::Copy) return finetune_copy(std::move(init), data, cfg);
    return finetune_han(std::move(init), data, stage_variant(stage), cfg);
  }();
  const std::string ckpt = path(name + ".ckpt");
  save_checkpoint(r.model, name, ckpt);

  Manifest m(finetune ? "finetune" : "train");
  m.settings(s);
  m.extra()["stage"] = name;
  for (const auto& [k, v] : std::vector<std::pair<std::string, std::string>>{{"train.src", a.train_src},
                                                                               {"train.tgt", a.train_tgt},
                                                                               {"valid.src", a.valid_src},
                                                                               {"valid.tgt", a.valid_tgt},
                                                                               {"vocab.src", a.vocab_src},
                                                                               {"vocab.tgt", a.vocab_tgt}})
    m.input(k, v);
  if (finetune) {
    m.input("init", a.init);
    m.checkpoint(a.init);
  }
  m.output("checkpoint", ckpt);
  m.output("log", path(name + ".log"));
  m.checkpoint(ckpt);
  const auto& best = r.history.at(r.best_epoch);
  m.metrics() = json{{"best_epoch", r.best_epoch}, {"val_loss", best.val_loss}, {"mean_p_copy", best.mean_p_copy},
                     {"aborted", r.aborted}};
  m.write(path(name + ".manifest.json"));

  std::cout << name << ": best epoch " << r.best_epoch << ", validation loss " << best.val_loss << '\n';
  if (r.aborted) {
    std::cerr << "error: training stopped: " << r.diagnostic << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

// ---- translate

struct TranslateArgs {
  std::string model, input, vocab_src, vocab_tgt, out, trace;
  std::size_t beam = 1;
  double length_penalty = 1.0;
  bool two_to_two = false;
  bool no_copy = false;
};

int translate(const TranslateArgs& a) {
  CheckpointInfo info;
  const Model model = load_checkpoint(a.model, &info);
  const auto sv = Vocabulary::load(a.vocab_src);
  const auto tv = Vocabulary::load(a.vocab_tgt);
  if (model.config().transformer.vocab_src != sv.size() || model.config().transformer.vocab_tgt != tv.size())
    throw DataError("checkpoint " + a.model + " does not match the vocabulary sizes");
  const auto corpus = load_one_side(a.input);

  TranslateOptions opts;
  opts.search = {a.beam, a.length_penalty};
  opts.keep_traces = !a.trace.empty();
  opts.force_copy_off = a.no_copy;
  if (a.two_to_two) {
    if (sv.separator_id() < 0 || tv.separator_id() < 0)
      throw DataError("--two-to-two needs vocabularies with a separator");
    opts.two_to_two = true;
    opts.source_separator = sv.separator_id();
    opts.target_separator = tv.separator_id();
  }

  std::ofstream trace;
  if (!a.trace.empty()) {
    trace.open(a.trace);
    if (!trace) throw DataError("cannot write " + a.trace);
  }
  std::vector<TokenDocument> docs;
  for (std::size_t d = 0; d < corpus.documents.size(); ++d) {
    std::vector<TokenIds> sources;
    for (const auto& s : corpus.documents[d].sentences) sources.push_back(sv.encode(s.source));
    const auto t = translate_document(model, sources, opts);
    TokenDocument doc;
    for (const auto& ids : t.outputs) doc.push_back(tv.decode(ids));
    docs.push_back(std::move(doc));
    if (trace.is_open())
      for (std::size_t i = 0; i < t.traces.size(); ++i) write_copy_trace(trace, d, i, t.traces[i], tv);
  }
  write_token_documents(docs, a.out);

  Manifest m("translate");
  m.extra()["config"] = json{{"beam", a.beam},
                             {"length_penalty", a.length_penalty},
                             {"two_to_two", a.two_to_two},
                             {"no_copy", a.no_copy},
                             {"stage", info.stage}};
  m.input("model", a.model);
  m.input("input", a.input);
  m.input("vocab.src", a.vocab_src);
  m.input("vocab.tgt", a.vocab_tgt);
  m.checkpoint(a.model);
  m.output("translation", a.out);
  if (!a.trace.empty()) m.output("trace", a.trace);
  m.metrics() = json{{"documents", docs.size()}};
  m.write(a.out + ".manifest.json");
  return kExitOk;
}

// ---- evaluate

struct EvaluateArgs {
  std::string hyp, ref, lexicon, concepts, out;
  std::string name = "system";
};

int evaluate(const EvaluateArgs& a) {
  if (a.lexicon.empty() != a.concepts.empty()) throw UsageError("--lexicon and --concepts go together");
  const auto hyp = load_token_documents(a.hyp);
  const auto ref = load_token_documents(a.ref);
  if (hyp.size() != ref.size())
    throw DataError("hypothesis has " + std::to_string(hyp.size()) + " documents, reference " +
                    std::to_string(ref.size()));
  SystemScores s{a.name, bleu4(hyp, ref), lc_score(hyp), std::nullopt};
  if (!a.lexicon.empty()) {
    std::ifstream lex(a.lexicon);
    if (!lex) throw DataError("cannot read " + a.lexicon);
    std::ifstream con(a.concepts);
    if (!con) throw DataError("cannot read " + a.concepts);
    s.consistency = consistency_rate(hyp, read_lexicon(lex), read_doc_concepts(con, ref.size()));
  }
  const auto reference = lc_score(ref);
  write_report_table(std::cout, {s}, reference);
  for (const auto& w : s.bleu.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& w : s.lc.warnings) std::cerr << "warning: " << w << '\n';

  if (!a.out.empty()) {
    fs::create_directories(a.out);
    const auto path = [&](const std::string& n) { return (fs::path(a.out) / n).string(); };
    std::ofstream table(path("report.txt"));
    write_report_table(table, {s}, reference);
    std::ofstream records(path("metrics.txt"));
    write_report_records(records, {s}, reference);
    Manifest m("evaluate");
    m.input("hyp", a.hyp);
    m.input("ref", a.ref);
    if (!a.lexicon.empty()) {
      m.input("lexicon", a.lexicon);
      m.input("concepts", a.concepts);
    }
    m.output("report", path("report.txt"));
    m.output("records", path("metrics.txt"));
    m.metrics() = scores_json({s}, reference);
    m.write(path("manifest.json"));
  }
  return kExitOk;
}

// ---- gradcheck

struct GradcheckArgs {
  std::string profile = "toy";
  std::uint64_t seed = 1;
  double tolerance = 1e-4;
  double step = 5e-5;
  std::string out;
};

int gradcheck(const GradcheckArgs& a) {
  if (a.profile != "toy") throw UsageError("unknown gradcheck profile '" + a.profile + "' (toy)");
  const auto r = full_step_gradient_check(a.seed, a.tolerance, a.step);
  std::cout << "checked " << r.entries_checked << " entries over all trainable parameters\n"
            << "worst " << r.worst_param << "[" << r.worst_index << "] analytic " << r.worst_analytic
            << " numeric " << r.worst_numeric << '\n'
            << "max rel err " << r.max_rel_error << (r.passed ? " <= " : " > ") << a.tolerance << '\n'
            << (r.passed ? "PASS" : "FAIL") << '\n';
  if (!a.out.empty()) {
    fs::create_directories(a.out);
    Manifest m("gradcheck");
    m.extra()["config"] = json{{"profile", a.profile}, {"tolerance", a.tolerance}, {"step", a.step}};
    m.extra()["seed"] = a.seed;
    m.metrics() = json{{"max_rel_error", r.max_rel_error},
                       {"entries_checked", r.entries_checked},
                       {"worst_param", r.worst_param},
                       {"worst_index", r.worst_index},
                       {"passed", r.passed}};
    m.write((fs::path(a.out) / "manifest.json").string());
  }
  return r.passed ? kExitOk : kExitNumerical;
}

// ---- experiment

struct ExperimentArgs {
  SettingsFlags settings;
  std::string out;
  bool quiet = false;
};

int experiment(const ExperimentArgs& a) {
  const auto s = resolve(a.settings);
  const auto r = run_experiment(s, a.out, a.quiet ? nullptr : &std::cerr);
  std::cout << r.table;
  if (!a.out.empty()) {
    const auto path = [&](const std::string& n) { return (fs::path(a.out) / n).string(); };
    Manifest m("experiment");
    m.settings(s);
    for (const char* f : {"train.src", "train.tgt", "valid.src", "valid.tgt", "test.src", "test.tgt",
                          "lexicon.tsv", "test.concepts", "vocab.src", "vocab.tgt", "train.log", "report.txt",
                          "metrics.txt"})
      m.output(f, path(f));
    for (const auto& [name, history] : r.histories) m.checkpoint(path(name + ".ckpt"));
    m.metrics() = scores_json(r.systems, r.reference);
    m.extra()["aborted"] = r.aborted;
    m.write(path("manifest.json"));
  }
  if (r.aborted) {
    std::cerr << "error: " << r.diagnostic << '\n';
    return kExitNumerical;
  }
  return kExitOk;
}

int run(int argc, char** argv) {
  CLI::App app{"Document-level translation with a copy-augmented hierarchical attention Transformer", "copyhan"};
  app.require_subcommand(1);
  app.fallthrough(false);

  GenSynthArgs gs;
  auto* c_gen = app.add_subcommand("gen-synth", "write a synthetic cohesion corpus");
  add_settings_flags(c_gen, gs.settings);
  c_gen->add_option("--out", gs.out, "output directory")->required();

  BuildVocabArgs bv;
  auto* c_vocab = app.add_subcommand("build-vocab", "build source and target vocabularies");
  c_vocab->add_option("--src", bv.src)->required()->check(CLI::ExistingFile);
  c_vocab->add_option("--tgt", bv.tgt)->required()->check(CLI::ExistingFile);
  c_vocab->add_option("--out-src", bv.out_src)->required();
  c_vocab->add_option("--out-tgt", bv.out_tgt)->required();
  c_vocab->add_option("--max-size", bv.max_size, "entries including reserved tokens");
  c_vocab->add_option("--min-freq", bv.min_freq);
  c_vocab->add_flag("--separator", bv.separator, "reserve a separator token (two-to-two)");

  TrainArgs tr, ft;
  const auto add_train = [](CLI::App* cmd, TrainArgs& t) {
    add_settings_flags(cmd, t.settings);
    cmd->add_option("--train-src", t.train_src)->required()->check(CLI::ExistingFile);
    cmd->add_option("--train-tgt", t.train_tgt)->required()->check(CLI::ExistingFile);
    cmd->add_option("--valid-src", t.valid_src)->required()->check(CLI::ExistingFile);
    cmd->add_option("--valid-tgt", t.valid_tgt)->required()->check(CLI::ExistingFile);
    cmd->add_option("--vocab-src", t.vocab_src)->required()->check(CLI::ExistingFile);
    cmd->add_option("--vocab-tgt", t.vocab_tgt)->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", t.out, "output directory")->required();
  };
  auto* c_train = app.add_subcommand("train", "train the sentence-level base model");
  add_train(c_train, tr);
  c_train->add_flag("--two-to-two", tr.two_to_two, "train the concatenation baseline instead");
  auto* c_fine = app.add_subcommand("finetune", "train a context stage on top of a checkpoint");
  add_train(c_fine, ft);
  c_fine->add_option("--stage", ft.stage)
      ->required()
      ->check(CLI::IsMember({"han-encoder", "han-decoder", "han-joint", "copy"}));
  c_fine->add_option("--init", ft.init, "starting checkpoint")->required()->check(CLI::ExistingFile);

  TranslateArgs tl;
  auto* c_tl = app.add_subcommand("translate", "translate document-formatted source text");
  c_tl->add_option("--model", tl.model)->required()->check(CLI::ExistingFile);
  c_tl->add_option("--input", tl.input)->required()->check(CLI::ExistingFile);
  c_tl->add_option("--vocab-src", tl.vocab_src)->required()->check(CLI::ExistingFile);
  c_tl->add_option("--vocab-tgt", tl.vocab_tgt)->required()->check(CLI::ExistingFile);
  c_tl->add_option("--out", tl.out)->required();
  c_tl->add_option("--trace", tl.trace, "per-step copy trace file");
  c_tl->add_option("--beam", tl.beam)->check(CLI::PositiveNumber);
  c_tl->add_option("--length-penalty", tl.length_penalty);
  c_tl->add_flag("--two-to-two", tl.two_to_two);
  c_tl->add_flag("--no-copy", tl.no_copy, "force the copy gate to zero");

  EvaluateArgs ev;
  auto* c_eval = app.add_subcommand("evaluate", "BLEU, LC and consistency of a translation");
  c_eval->add_option("--hyp", ev.hyp)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--ref", ev.ref)->required()->check(CLI::ExistingFile);
  c_eval->add_option("--lexicon", ev.lexicon)->check(CLI::ExistingFile);
  c_eval->add_option("--concepts", ev.concepts)->check(CLI::ExistingFile);
  c_eval->add_option("--name", ev.name, "system name in the report");
  c_eval->add_option("--out", ev.out, "directory for report, records and manifest");

  GradcheckArgs gc;
  auto* c_gc = app.add_subcommand("gradcheck", "finite-difference check of a full copy-HAN decoder step");
  c_gc->add_option("--profile", gc.profile);
  c_gc->add_option("--seed", gc.seed);
  c_gc->add_option("--tolerance", gc.tolerance);
  c_gc->add_option("--step", gc.step, "central-difference step");
  c_gc->add_option("--out", gc.out, "directory for the manifest");

  ExperimentArgs ex;
  auto* c_ex = app.add_subcommand("experiment", "synthetic cohesion experiment, end to end");
  add_settings_flags(c_ex, ex.settings);
  c_ex->add_option("--out", ex.out, "output directory");
  c_ex->add_flag("--quiet", ex.quiet, "no progress on stderr");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << "error: " << e.what() << "\n\n";
    const auto subs = app.get_subcommands();
    std::cerr << (subs.empty() ? app.help() : subs.front()->help());
    return kExitUsage;
  }

  try {
    if (c_gen->parsed()) return gen_synth(gs);
    if (c_vocab->parsed()) return build_vocab(bv);
    if (c_train->parsed()) return train(tr, false);
    if (c_fine->parsed()) return train(ft, true);
    if (c_tl->parsed()) return translate(tl);
    if (c_eval->parsed()) return evaluate(ev);
    if (c_gc->parsed()) return gradcheck(gc);
    if (c_ex->parsed()) return experiment(ex);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  } catch (const NumericalError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitNumerical;
  } catch (const ContractError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitUsage;
}

}  // namespace
}  // namespace copyhan

int main(int argc, char** argv) { return copyhan::run(argc, argv); }
