// rnnt: command-line driver for the streaming RNN-T engine.
//
// Subcommands cover the full loop: synthetic data generation, training,
// batch/streaming decoding, 8-bit quantization, bias-FST compilation, WER
// scoring, and real-time benchmarking.  Set RNNT_LOG=0|1|2 to control log
// verbosity on standard error.

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>

#include "rnnt/biasing.hpp"
#include "rnnt/container.hpp"
#include "rnnt/decoder.hpp"
#include "rnnt/io.hpp"
#include "rnnt/quant.hpp"
#include "rnnt/runtime.hpp"
#include "rnnt/toy.hpp"
#include "rnnt/train.hpp"
#include "rnnt/wer.hpp"

namespace {

using namespace rnnt;

// ----- shared option blocks -----

struct DecodeOptions {
  std::string model_path;
  std::string manifest;
  int beam = 4;
  int max_expansions = 3;
  int nbest = 1;
  size_t cache_capacity = 1024;
  std::string phrases_path;
  std::string inventory_path;
  double boost = 1.0;
  double lambda = 0.0;

  void attach(CLI::App* cmd, bool with_bias = true) {
    cmd->add_option("--model", model_path, "model container (.rntc)")->required();
    cmd->add_option("--manifest", manifest, "tab-separated manifest: id, feature file, transcript")
        ->required();
    cmd->add_option("--beam", beam, "beam width")->capture_default_str();
    cmd->add_option("--max-expansions", max_expansions, "label expansions per hypothesis per frame")
        ->capture_default_str();
    cmd->add_option("--nbest", nbest, "hypotheses to emit per utterance")->capture_default_str();
    cmd->add_option("--cache-capacity", cache_capacity,
                    "prediction-state cache entries (0 disables caching)")
        ->capture_default_str();
    if (with_bias) {
      cmd->add_option("--phrases", phrases_path, "biasing phrases, one per line");
      cmd->add_option("--inventory", inventory_path, "word<TAB>unit unit unit spelling table");
      cmd->add_option("--boost", boost, "per-unit biasing boost")->capture_default_str();
      cmd->add_option("--lambda", lambda, "shallow-fusion weight")->capture_default_str();
    }
  }

  EngineModel load_engine() const { return make_engine(load_container(model_path)); }

  // Compiles the context FST when phrases are given; keeps it alive for the
  // fusion hook.
  std::shared_ptr<ContextFst> maybe_context() const {
    if (phrases_path.empty()) return nullptr;
    if (inventory_path.empty()) {
      throw ConfigError("--phrases requires --inventory for spelling");
    }
    auto compiled = compile_context_from_phrases(load_phrases(phrases_path),
                                                 load_inventory(inventory_path),
                                                 static_cast<float>(boost));
    for (const auto& oov : compiled.oov) log_info("skipping out-of-vocabulary phrase: " + oov);
    return std::make_shared<ContextFst>(std::move(compiled.fst));
  }

  DecodeParams params(const std::shared_ptr<ContextFst>& ctx) const {
    DecodeParams p;
    p.beam_width = beam;
    p.max_expansions_per_frame = max_expansions;
    p.nbest = nbest;
    p.cache_capacity = cache_capacity;
    if (ctx) {
      p.lambda = static_cast<float>(lambda);
      p.fusion = make_fusion_hook(*ctx);
    }
    p.validate();
    return p;
  }
};

// ----- gen-data -----

int cmd_gen_data(const ToyTaskSpec& spec, const std::string& out_dir, int count, int holdout,
                 const std::vector<std::string>& phrase_args) {
  ToyTaskSpec s = spec;
  for (const auto& arg : phrase_args) s.phrases.push_back(parse_transcript(arg));
  s.validate();
  std::filesystem::create_directories(out_dir);
  const auto train = gen_toy_data(s, count);
  write_dataset(train, out_dir, "manifest.tsv");
  log_info("wrote " + std::to_string(train.size()) + " utterances to " + out_dir);
  if (holdout > 0) {
    ToyTaskSpec hs = s;
    hs.seed = s.seed + 1;  // fresh draws, same embeddings
    // Distinct id prefix: both splits share out_dir, and feature files are
    // named after the utterance id, so reusing "utt" would clobber the
    // training split's features.
    const auto held = gen_toy_data(hs, holdout, "held");
    write_dataset(held, out_dir, "heldout.tsv");
    log_info("wrote " + std::to_string(held.size()) + " held-out utterances");
  }
  if (!s.phrases.empty()) {
    // Word-level phrase list plus the spelling inventory that detokenizes
    // each phrase, for compile-bias / biased decode.
    std::ofstream pf(out_dir + "/phrases.txt");
    std::ofstream inv(out_dir + "/inventory.tsv");
    for (const auto& units : s.phrases) {
      const std::string word = detokenize(units);
      pf << word << '\n';
      inv << word << '\t' << format_transcript(units) << '\n';
    }
    log_info("wrote phrases.txt and inventory.tsv");
  }
  return 0;
}

// ----- train -----

struct TrainOptions {
  std::string manifest;
  std::string out_path;
  std::string init_path;
  ModelConfig model;
  TrainConfig train;
};

int cmd_train(const TrainOptions& o) {
  const auto data = load_dataset(o.manifest);
  if (data.empty()) throw ConfigError("training manifest is empty");
  RnntModel<double> model;
  if (!o.init_path.empty()) {
    // Warm start: the container fixes the architecture, so shape flags are
    // ignored and only the optimization flags apply.
    model = float_model_from(load_container(o.init_path)).cast<double>();
    if (model.cfg.feature_dim != data[0].features.dim()) {
      throw ConfigError("--init model feature_dim does not match the manifest");
    }
    log_info("warm start from " + o.init_path);
  } else {
    ModelConfig cfg = o.model;
    cfg.feature_dim = data[0].features.dim();
    cfg.validate();
    model = init_model<double>(cfg, o.train.seed);
  }
  Dataset<double> train_data;
  for (const auto& u : data) {
    train_data.push_back({u.id,
                          FeatureSeq<double>{u.features.frames.cast<double>(), u.features.frame_period},
                          u.labels});
  }
  const TrainHistory hist = train_model(model, train_data, o.train, [](int step, double loss, double ema) {
    if (step % 50 == 0) {
      log_info("step " + std::to_string(step) + " loss " + std::to_string(loss) + " ema " +
               std::to_string(ema));
    }
  });
  if (hist.diagnostic_fired) {
    log_info("diagnostic: smoothed loss not improving over the early phase");
  }
  auto final_model = model.cast<float>();
  save_container(to_container(final_model), o.out_path);
  log_info("saved model to " + o.out_path + " (final ema loss " +
           std::to_string(hist.smoothed.empty() ? 0.0 : hist.smoothed.back()) + ")");
  return 0;
}

// ----- decode / stream -----

int cmd_decode(const DecodeOptions& o, const std::string& out_path, const std::string& hyp_path) {
  const EngineModel engine = o.load_engine();
  const auto ctx = o.maybe_context();
  const DecodeParams params = o.params(ctx);
  const auto data = load_dataset(o.manifest);
  std::ofstream out_file;
  std::ostream* out = &std::cout;
  if (!out_path.empty()) {
    out_file.open(out_path);
    if (!out_file) throw IoError("cannot open for write: " + out_path);
    out = &out_file;
  }
  std::ofstream hyp_file;
  if (!hyp_path.empty()) {
    hyp_file.open(hyp_path);
    if (!hyp_file) throw IoError("cannot open for write: " + hyp_path);
  }
  for (const auto& utt : data) {
    const DecodeResult res = decode_utterance(engine, utt.features.frames, params);
    (*out) << "# " << utt.id << '\n' << format_nbest(res.nbest);
    if (hyp_file.is_open()) {
      hyp_file << utt.id << '\t'
               << (res.nbest.empty() ? "" : format_transcript(res.nbest[0].labels)) << '\n';
    }
  }
  return 0;
}

int cmd_stream(const DecodeOptions& o) {
  const EngineModel engine = o.load_engine();
  const auto ctx = o.maybe_context();
  const DecodeParams params = o.params(ctx);
  const auto data = load_dataset(o.manifest);
  for (const auto& utt : data) {
    DecodeSession session(engine, params);
    const Tensor2D& f = utt.features.frames;
    int last_printed = -1;
    for (int t = 0; t < f.rows; ++t) {
      session.accept_frame(f.row(t), f.cols);
      if (session.reduced_frames() > last_printed) {
        last_printed = session.reduced_frames();
        std::cout << utt.id << " partial " << session.reduced_frames() << ": "
                  << detokenize(session.best().prefix) << '\n';
      }
    }
    session.finish();
    std::cout << utt.id << " final: " << format_nbest(session.nbest());
  }
  return 0;
}

// ----- quantize -----

int cmd_quantize(const std::string& in_path, const std::string& out_path, const std::string& scheme) {
  const ModelContainer fc = load_container(in_path);
  const ModelContainer qc = quantize_model(fc, parse_quant_scheme(scheme));
  save_container(qc, out_path);
  const double ratio = static_cast<double>(qc.payload_bytes()) / static_cast<double>(fc.payload_bytes());
  log_info("quantized payload ratio: " + std::to_string(ratio));
  return 0;
}

// ----- compile-bias -----

int cmd_compile_bias(const std::string& phrases_path, const std::string& inventory_path, double boost,
                     const std::string& out_path) {
  const auto compiled = compile_context_from_phrases(load_phrases(phrases_path),
                                                     load_inventory(inventory_path),
                                                     static_cast<float>(boost));
  for (const auto& oov : compiled.oov) log_info("out-of-vocabulary phrase: " + oov);
  const std::string text = fst_to_text(compiled.fst);
  if (out_path.empty()) {
    std::cout << text;
  } else {
    std::ofstream os(out_path);
    if (!os) throw IoError("cannot open for write: " + out_path);
    os << text;
  }
  return 0;
}

// ----- eval -----

int cmd_eval(const std::string& ref_manifest, const std::string& hyp_path) {
  const auto refs = load_manifest(ref_manifest);
  std::map<std::string, Labels> hyps;
  std::ifstream is(hyp_path);
  if (!is) throw IoError("cannot open hypotheses: " + hyp_path);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    const auto tab = line.find('\t');
    if (tab == std::string::npos) {
      throw IoError("hypothesis line " + std::to_string(lineno) + ": expected id<TAB>transcript");
    }
    hyps[line.substr(0, tab)] = parse_transcript(line.substr(tab + 1));
  }
  WerAccumulator acc;
  for (const auto& entry : refs) {
    auto it = hyps.find(entry.id);
    acc.add(entry.transcript, it == hyps.end() ? Labels{} : it->second);
  }
  std::cout << std::fixed << std::setprecision(2) << "WER " << acc.wer() * 100.0 << "% (S "
            << acc.total.substitutions << ", I " << acc.total.insertions << ", D "
            << acc.total.deletions << ", ref " << acc.total.ref_len << ")\n";
  return 0;
}

// ----- bench-rtf -----

int cmd_bench_rtf(const DecodeOptions& o, const std::string& mode, size_t queue_capacity) {
  const EngineModel engine = o.load_engine();
  const auto ctx = o.maybe_context();
  const DecodeParams params = o.params(ctx);
  const auto data = load_dataset(o.manifest);
  if (mode == "measure") {
    std::cout << measure_rt(engine, data, params).to_text();
    return 0;
  }
  PipelineConfig cfg;
  cfg.queue_capacity = queue_capacity;
  cfg.pipelined = (mode == "pipelined");
  if (!cfg.pipelined && mode != "sequential") {
    throw ConfigError("unknown mode '" + mode + "' (expected measure|sequential|pipelined)");
  }
  const PipelineResult res = run_pipeline(engine, data, params, cfg);
  std::cout << res.report.to_text();
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"streaming RNN-T speech recognition engine"};
  app.require_subcommand(1);
  app.footer("Environment: RNNT_LOG=0|1|2 sets log verbosity (default 1).");

  // gen-data
  auto* gen = app.add_subcommand("gen-data", "generate a synthetic toy dataset");
  ToyTaskSpec spec;
  std::string gen_out;
  int gen_count = 1000;
  int gen_holdout = 0;
  std::vector<std::string> gen_phrases;
  gen->add_option("--out", gen_out, "output directory")->required();
  gen->add_option("--count", gen_count, "utterances to generate")->capture_default_str();
  gen->add_option("--holdout", gen_holdout, "extra held-out utterances (heldout.tsv)")
      ->capture_default_str();
  gen->add_option("--num-labels", spec.num_labels, "subword inventory size")->capture_default_str();
  gen->add_option("--common-labels", spec.common_labels, "units drawn for regular words")
      ->capture_default_str();
  gen->add_option("--feature-dim", spec.feature_dim, "feature dimension")->capture_default_str();
  gen->add_option("--min-len", spec.min_len, "min labels per utterance")->capture_default_str();
  gen->add_option("--max-len", spec.max_len, "max labels per utterance")->capture_default_str();
  gen->add_option("--min-dur", spec.min_dur, "min frames per label")->capture_default_str();
  gen->add_option("--max-dur", spec.max_dur, "max frames per label")->capture_default_str();
  gen->add_option("--noise-sigma", spec.noise_sigma, "frame noise stddev")->capture_default_str();
  gen->add_option("--confusable-delta", spec.confusable_delta,
                  "name-unit embedding offset from its common anchor")
      ->capture_default_str();
  gen->add_option("--phrase", gen_phrases, "biasing phrase as unit ids, e.g. \"9 10\" (repeatable)");
  gen->add_option("--phrase-rate", spec.phrase_rate, "fraction of utterances carrying a phrase")
      ->capture_default_str();
  gen->add_option("--seed", spec.seed, "dataset seed")->capture_default_str();
  gen->add_option("--embedding-seed", spec.embedding_seed, "symbol embedding seed (shared by splits)")
      ->capture_default_str();

  // train
  auto* tr = app.add_subcommand("train", "train a model on a manifest");
  TrainOptions topt;
  tr->add_option("--manifest", topt.manifest, "training manifest")->required();
  tr->add_option("--out", topt.out_path, "output model container")->required();
  tr->add_option("--init", topt.init_path,
                 "warm-start from a float container (shape flags are then ignored)");
  tr->add_option("--num-labels", topt.model.num_labels, "subword inventory size")
      ->capture_default_str();
  tr->add_option("--embed-dim", topt.model.embed_dim, "prediction embedding dim")
      ->capture_default_str();
  tr->add_option("--enc-layers", topt.model.enc_layers, "encoder LSTM layers")->capture_default_str();
  tr->add_option("--enc-units", topt.model.enc_units, "encoder units per layer")
      ->capture_default_str();
  tr->add_option("--enc-proj", topt.model.enc_proj, "encoder projection dim (0 = none)")
      ->capture_default_str();
  tr->add_option("--reduction-factor", topt.model.reduction_factor, "time reduction factor N")
      ->capture_default_str();
  tr->add_option("--reduction-after", topt.model.reduction_after_layer,
                 "encoder layer after which reduction applies")
      ->capture_default_str();
  tr->add_option("--pred-layers", topt.model.pred_layers, "prediction LSTM layers")
      ->capture_default_str();
  tr->add_option("--pred-units", topt.model.pred_units, "prediction units per layer")
      ->capture_default_str();
  tr->add_option("--pred-proj", topt.model.pred_proj, "prediction projection dim (0 = none)")
      ->capture_default_str();
  tr->add_option("--joint-dim", topt.model.joint_dim, "joint hidden width")->capture_default_str();
  tr->add_flag("--no-layer-norm", [&](int64_t) { topt.model.layer_norm = false; },
               "disable layer normalization");
  tr->add_option("--lr", topt.train.lr, "learning rate")->capture_default_str();
  tr->add_option("--momentum", topt.train.momentum, "SGD momentum")->capture_default_str();
  tr->add_option("--clip", topt.train.grad_clip, "global gradient-norm clip")->capture_default_str();
  tr->add_option("--batch", topt.train.batch_size, "batch size")->capture_default_str();
  tr->add_option("--steps", topt.train.steps, "training steps")->capture_default_str();
  tr->add_option("--seed", topt.train.seed, "init/shuffle seed")->capture_default_str();

  // decode
  auto* dec = app.add_subcommand("decode", "batch decode a manifest to N-best lists");
  DecodeOptions dopt;
  dopt.attach(dec);
  std::string dec_out, dec_hyp;
  dec->add_option("--out", dec_out, "write N-best lists here instead of standard output");
  dec->add_option("--hyp-out", dec_hyp, "also write top-1 id<TAB>transcript for `eval`");

  // stream
  auto* str = app.add_subcommand("stream", "streaming decode with incremental partials");
  DecodeOptions sopt;
  sopt.attach(str);

  // quantize
  auto* qz = app.add_subcommand("quantize", "quantize a model container to 8-bit");
  std::string q_in, q_out, q_scheme = "sym";
  qz->add_option("--model", q_in, "float model container")->required();
  qz->add_option("--out", q_out, "quantized container path")->required();
  qz->add_option("--scheme", q_scheme, "sym|asym")->capture_default_str();

  // compile-bias
  auto* cb = app.add_subcommand("compile-bias", "compile phrases into a context FST dump");
  std::string cb_phrases, cb_inventory, cb_out;
  double cb_boost = 1.0;
  cb->add_option("--phrases", cb_phrases, "phrase list, one per line")->required();
  cb->add_option("--inventory", cb_inventory, "word<TAB>units spelling table")->required();
  cb->add_option("--boost", cb_boost, "per-unit boost")->capture_default_str();
  cb->add_option("--out", cb_out, "output path (default standard output)");

  // eval
  auto* ev = app.add_subcommand("eval", "score hypotheses against a reference manifest");
  std::string ev_ref, ev_hyp;
  ev->add_option("--manifest", ev_ref, "reference manifest")->required();
  ev->add_option("--hyp", ev_hyp, "hypotheses: id<TAB>transcript per line")->required();

  // bench-rtf
  auto* br = app.add_subcommand("bench-rtf", "measure real-time factors (RT90)");
  DecodeOptions bopt;
  bopt.attach(br);
  std::string br_mode = "measure";
  size_t br_capacity = 8;
  br->add_option("--mode", br_mode, "measure|sequential|pipelined")->capture_default_str();
  br->add_option("--queue-capacity", br_capacity, "pipeline queue capacity")->capture_default_str();

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) {
      // Unless set explicitly, every unit is a common unit.
      if (gen->count("--common-labels") == 0) spec.common_labels = spec.num_labels;
      return cmd_gen_data(spec, gen_out, gen_count, gen_holdout, gen_phrases);
    }
    if (tr->parsed()) return cmd_train(topt);
    if (dec->parsed()) return cmd_decode(dopt, dec_out, dec_hyp);
    if (str->parsed()) return cmd_stream(sopt);
    if (qz->parsed()) return cmd_quantize(q_in, q_out, q_scheme);
    if (cb->parsed()) return cmd_compile_bias(cb_phrases, cb_inventory, cb_boost, cb_out);
    if (ev->parsed()) return cmd_eval(ev_ref, ev_hyp);
    if (br->parsed()) return cmd_bench_rtf(bopt, br_mode, br_capacity);
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << '\n';
    return 1;
  }
  return 0;
}
