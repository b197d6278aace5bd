#include "ssvae/cli.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "ssvae/config.hpp"
#include "ssvae/diagnostics.hpp"
#include "ssvae/gradcheck.hpp"

namespace ssvae {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitConfig = 2;
constexpr int kExitCheckpoint = 3;

struct CommonOpts {
  std::string config_path;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> epochs;
  std::string out_dir;
};

RunConfig resolve_config(const CommonOpts& o) {
  RunConfig cfg = o.config_path.empty() ? RunConfig{} : parse_config_file(o.config_path);
  for (const auto& kv : o.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) {
      throw std::invalid_argument("config: --set expects key=value, got '" + kv + "'");
    }
    apply_kv(cfg, kv.substr(0, eq), kv.substr(eq + 1));
  }
  if (o.seed) cfg.seed = *o.seed;
  if (o.epochs) cfg.epochs = *o.epochs;
  if (!o.out_dir.empty()) cfg.out_dir = o.out_dir;
  cfg.finalize();
  return cfg;
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream os(path, std::ios::trunc | std::ios::binary);
  if (!os) throw std::runtime_error("cli: cannot write '" + path.string() + "'");
  os << text;
}

// Checkpoint shapes must match what the config would construct.
std::optional<std::string> checkpoint_mismatch(const ModelParams& loaded,
                                               const ModelConfig& cfg) {
  RngStream throwaway(0);
  ModelParams ref = init_model(cfg, throwaway);
  for (const auto& [gname, ref_set] : ref.groups()) {
    if (gname == "baseline") continue;
    const ParamSet* got = nullptr;
    for (const auto& [n, p] : loaded.groups()) {
      if (n == gname) got = p;
    }
    for (const auto& [pname, t] : ref_set->entries()) {
      if (!got->has(pname)) return gname + "/" + pname + " missing from checkpoint";
      if (got->at(pname).shape() != t.shape()) {
        return gname + "/" + pname + " has shape " + shape_str(got->at(pname).shape()) +
               ", model wants " + shape_str(t.shape());
      }
    }
  }
  return std::nullopt;
}

struct LoadedRun {
  RunConfig cfg;
  Vocab vocab;
  ModelParams params;
};

LoadedRun load_run(const std::string& run_dir, const std::string& checkpoint_override) {
  const fs::path dir(run_dir);
  if (!fs::exists(dir / "config.txt")) {
    throw std::invalid_argument("cli: no config.txt under '" + run_dir + "'");
  }
  LoadedRun out{parse_config_file((dir / "config.txt").string()),
                Vocab::load((dir / "vocab.tsv").string()), {}};
  out.cfg.finalize();
  out.cfg.model.vocab_size = out.vocab.size();
  const std::string ckpt = checkpoint_override.empty()
                               ? (dir / "checkpoint_best.bin").string()
                               : checkpoint_override;
  out.params = load_checkpoint(ckpt);
  if (auto why = checkpoint_mismatch(out.params, out.cfg.model)) {
    throw std::runtime_error("checkpoint-incompatible: " + *why);
  }
  return out;
}

json eval_block(const ModelParams& params, const ModelConfig& cfg,
                const std::vector<Batch>& batches, std::uint64_t seed) {
  const EvalResult r = evaluate(params, cfg, batches, seed);
  return json{{"accuracy", r.accuracy}, {"mean_bound", r.mean_bound}, {"count", r.count}};
}

int cmd_train(const CommonOpts& common, bool dry_run) {
  RunConfig cfg = resolve_config(common);
  DataBundle data = prepare_data(cfg);
  cfg.model.vocab_size = data.vocab.size();
  if (dry_run) {
    std::cout << serialize_config(cfg);
    return kExitOk;
  }
  fs::create_directories(cfg.out_dir);
  const fs::path dir(cfg.out_dir);
  write_text(dir / "config.txt", serialize_config(cfg));
  data.vocab.save((dir / "vocab.tsv").string());
  write_text(dir / "split_manifest.json", split_manifest_json(data.splits));

  TrainResult result = train_model(cfg.model, cfg.train, data.splits, data.vocab,
                                   [](const EpochRow& row) {
                                     std::cout << "epoch " << row.epoch << "  J=" << row.objective
                                               << "  train_acc=" << row.train_accuracy
                                               << "  valid_acc=" << row.valid_accuracy
                                               << "  D=" << row.d_index << '\n';
                                   });

  write_text(dir / "train_report.csv",
             train_report_csv(result.report, cfg.model.latent_width));
  save_checkpoint(result.best_params, (dir / "checkpoint_best.bin").string());
  save_checkpoint(result.final_params, (dir / "checkpoint_final.bin").string());

  json summary;
  summary["best_epoch"] = result.report.best_epoch;
  summary["best_valid_accuracy"] = result.report.best_valid_accuracy;
  if (!data.splits.test.empty()) {
    auto test_batches = make_batches(data.splits.test, data.vocab, cfg.batch_size,
                                     mix_seed(cfg.seed, 0x7E57), false, true);
    summary["test_accuracy"] =
        evaluate(result.best_params, cfg.model, test_batches, mix_seed(cfg.seed, 0xE7A3))
            .accuracy;
  } else {
    summary["test_accuracy"] = nullptr;
  }
  write_text(dir / "summary.json", summary.dump(2) + "\n");

  auto valid_batches = make_batches(data.splits.valid, data.vocab, cfg.batch_size,
                                    mix_seed(cfg.seed, 0x3A11D), false, true);
  dump_latents(result.best_params, cfg.model, valid_batches, mix_seed(cfg.seed, 0x1A7),
               (dir / "latents.csv").string());

  std::cout << summary.dump(2) << '\n';
  return kExitOk;
}

int cmd_eval(const std::string& run_dir, const std::string& checkpoint,
             const std::string& data_path) {
  LoadedRun run = load_run(run_dir, checkpoint);
  json out;
  if (!data_path.empty()) {
    auto docs = load_corpus(data_path, run.cfg.max_len);
    auto batches = make_batches(docs, run.vocab, run.cfg.batch_size, 1, false, true);
    out["data"] = eval_block(run.params, run.cfg.model, batches, mix_seed(run.cfg.seed, 0xE7A4));
  } else {
    DataBundle data = prepare_data(run.cfg);
    const auto mk = [&](const std::vector<Document>& docs, std::uint64_t salt) {
      return make_batches(docs, run.vocab, run.cfg.batch_size, salt, false, true);
    };
    out["train"] = eval_block(run.params, run.cfg.model, mk(data.splits.labeled, 0x7EA1),
                              mix_seed(run.cfg.seed, 0xE7A1));
    out["valid"] = eval_block(run.params, run.cfg.model, mk(data.splits.valid, 0x3A11D),
                              mix_seed(run.cfg.seed, 0xE7A2));
    if (!data.splits.test.empty()) {
      out["test"] = eval_block(run.params, run.cfg.model, mk(data.splits.test, 0x7E57),
                               mix_seed(run.cfg.seed, 0xE7A3));
    }
  }
  std::cout << out.dump(2) << '\n';
  return kExitOk;
}

int cmd_generate(const std::string& run_dir, const std::string& checkpoint,
                 std::vector<int> labels, std::size_t count, const std::string& mode_str,
                 double temperature, bool paired, std::size_t max_len, std::uint64_t seed) {
  LoadedRun run = load_run(run_dir, checkpoint);
  const GenMode mode = mode_str == "greedy" ? GenMode::Greedy : GenMode::Sample;
  if (mode_str != "greedy" && mode_str != "sample") {
    throw std::invalid_argument("cli: --mode must be greedy or sample");
  }
  if (labels.empty()) {
    for (std::size_t c = 0; c < run.cfg.model.classes; ++c) labels.push_back(static_cast<int>(c));
  }
  RngStream z_rng(mix_seed(seed, 0x9E4));
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor shared_z = z_rng.draw_normal({run.cfg.model.latent_width});
    for (std::size_t li = 0; li < labels.size(); ++li) {
      const Tensor z = paired ? shared_z : z_rng.draw_normal({run.cfg.model.latent_width});
      const auto ids = generate(run.params, run.cfg.model, labels[li], z, mode, temperature,
                                max_len, mix_seed(seed, i, li));
      std::cout << labels[li] << '\t';
      for (std::size_t t = 0; t < ids.size(); ++t) {
        if (t) std::cout << ' ';
        std::cout << run.vocab.token_of(ids[t]);
      }
      std::cout << '\n';
    }
  }
  return kExitOk;
}

int cmd_probe_variance(const std::string& run_dir, const std::string& est_kind,
                       const std::string& baseline, int k, std::size_t n_draws,
                       std::size_t n_coords, std::uint64_t seed, const std::string& out_path) {
  EstimatorConfig est;
  est.kind = estimator_kind_from_string(est_kind);
  est.baseline = baseline_kind_from_string(baseline);
  est.k = k;
  est.validate();

  ModelParams params;
  ModelConfig mcfg;
  Batch batch;
  BaselineS1State s1{};
  if (!run_dir.empty()) {
    LoadedRun run = load_run(run_dir, "");
    mcfg = run.cfg.model;
    params = std::move(run.params);
    if (params.baseline.has("c")) s1.c = params.baseline.at("c")[0];
    DataBundle data = prepare_data(run.cfg);
    auto batches = make_batches(data.splits.valid, run.vocab, 8, mix_seed(seed, 0xBA7), false,
                                false);
    batch = batches.front();
  } else {
    // fresh toy model on a small synthetic batch
    mcfg = ModelConfig{.vocab_size = 0, .classes = 2, .embed_width = 8, .cell_width = 16,
                       .latent_width = 4, .decoder_cell = CellKind::Clstm2, .dropout = 0.0};
    SynthSpec synth{.classes = 2, .vocab = 40, .keywords_per_class = 5, .len_lo = 4,
                    .len_hi = 7, .signal = 0.4, .size = 8, .seed = seed};
    auto docs = synth_corpus(synth);
    Vocab vocab = Vocab::build(docs, 100, 1);
    mcfg.vocab_size = vocab.size();
    RngStream rng(mix_seed(seed, 0x1217));
    params = init_model(mcfg, rng);
    batch = make_batches(docs, vocab, 8, seed, false, false).front();
  }

  auto rows = estimator_variance_probe(params, mcfg, batch, est, s1, /*kl_weight=*/1.0, n_draws,
                                       n_coords, seed);
  const std::string csv = variance_rows_csv(rows);
  if (out_path.empty()) {
    std::cout << csv;
  } else {
    write_text(out_path, csv);
  }
  return kExitOk;
}

}  // namespace

std::vector<GradcheckRow> run_gradcheck(double tolerance, bool corrupt,
                                        std::vector<std::string>* log) {
  (void)tolerance;
  std::vector<GradcheckRow> rows;
  // tiny shapes keep the sweep under a couple of minutes
  ModelConfig cfg{.vocab_size = 12, .classes = 2, .embed_width = 4, .cell_width = 6,
                  .latent_width = 3, .decoder_cell = CellKind::Clstm2, .dropout = 0.0};
  RngStream rng(99);
  const std::size_t n = 3, len = 4;

  Batch batch;
  batch.n = n;
  batch.max_len = len;
  batch.ids.resize(n * len);
  batch.mask.assign(n * len, 1.0);
  batch.lengths.assign(n, len);
  batch.labels = std::vector<int>{0, 1, 0};
  for (auto& id : batch.ids) id = static_cast<int>(rng.next_u64() % cfg.vocab_size);
  // one short row exercises masking
  batch.lengths[2] = 2;
  batch.mask[2 * len + 2] = batch.mask[2 * len + 3] = 0.0;

  GradCheckOptions opt;
  opt.coords_per_tensor = 12;
  opt.eps = 1e-5;

  const auto push = [&](const std::string& component, const std::string& group,
                        const GradCheckReport& rep) {
    rows.push_back({component, group, rep.max_rel_err});
    if (log) {
      std::ostringstream os;
      os << component << " / " << group << ": max_rel_err=" << rep.max_rel_err;
      log->push_back(os.str());
    }
  };

  // cells: 3-step unroll of each kind over a dedicated tiny ParamSet
  for (CellKind kind : {CellKind::Vanilla, CellKind::Clstm1, CellKind::Clstm2}) {
    const std::size_t in = kind == CellKind::Clstm1 ? cfg.embed_width + cfg.classes
                                                    : cfg.embed_width;
    std::vector<ParamSpecEntry> spec{{"emb", {cfg.vocab_size, cfg.embed_width}, Init::Glorot, 0.0}};
    for (auto& e :
         lstm_param_spec("lstm", in, cfg.cell_width, kind == CellKind::Clstm2, cfg.classes))
      spec.push_back(e);
    ParamSet ps = init_params(spec, rng);
    const Tensor y = one_hot({0, 1, 0}, cfg.classes);
    LossFn loss = [&, kind](Tape& tape, const BoundParams& p) {
      std::optional<Var> yv;
      if (kind != CellKind::Vanilla) yv = tape.constant(y);
      auto rolled = unroll(tape, kind, p, "emb", "lstm", batch.ids, batch.mask, n, 3, yv);
      Var acc = rolled.h[0];
      for (std::size_t t = 1; t < rolled.h.size(); ++t) acc = add(acc, rolled.h[t]);
      return mean(mul(acc, acc));
    };
    GradCheckOptions o = opt;
    if (corrupt && rows.empty()) o.analytic_scale = 1.01;  // negative-control fixture
    push(to_string(kind) + "_step(3 unrolled)", "cell", finite_difference_check(loss, ps, o));
  }

  ModelParams params = init_model(cfg, rng);
  const Tensor y = one_hot(*batch.labels, cfg.classes);
  const Tensor eps = RngStream(5).draw_normal({n, cfg.latent_width});
  const auto dec_in = shifted_decoder_inputs(batch);

  enum class Group { Enc, Dec, Clf };
  const auto bind_mixed = [&](Tape& tape, const BoundParams& checked, Group which) {
    return ModelBound{
        which == Group::Enc ? checked : BoundParams(tape, params.encoder, false),
        which == Group::Dec ? checked : BoundParams(tape, params.decoder, false),
        which == Group::Clf ? checked : BoundParams(tape, params.classifier, false)};
  };

  {  // encoder through the KL head
    LossFn loss = [&](Tape& tape, const BoundParams& p) {
      ModelBound m = bind_mixed(tape, p, Group::Enc);
      return mean(gaussian_kl(encode(tape, m, cfg, batch, y)));
    };
    push("encoder_kl", "encoder", finite_difference_check(loss, params.encoder, opt));
  }
  {  // classifier through the cross-entropy
    LossFn loss = [&](Tape& tape, const BoundParams& p) {
      ModelBound m = bind_mixed(tape, p, Group::Clf);
      return classifier_cross_entropy(classify(tape, m, cfg, batch), *batch.labels);
    };
    push("classifier_ce", "classifier", finite_difference_check(loss, params.classifier, opt));
  }
  // labeled bound, every group
  for (auto [which, name, set] :
       {std::tuple{Group::Enc, "encoder", &params.encoder},
        std::tuple{Group::Dec, "decoder", &params.decoder}}) {
    LossFn loss = [&, which](Tape& tape, const BoundParams& p) {
      ModelBound m = bind_mixed(tape, p, which);
      return scale(mean(labeled_bound_with(tape, m, cfg, batch, y, 0.7, eps, dec_in).bound),
                   -1.0);
    };
    push("labeled_bound", name, finite_difference_check(loss, *set, opt));
  }
  // enumerated unlabeled bound, every group incl. classifier
  for (auto [which, name, set] :
       {std::tuple{Group::Enc, "encoder", &params.encoder},
        std::tuple{Group::Dec, "decoder", &params.decoder},
        std::tuple{Group::Clf, "classifier", &params.classifier}}) {
    LossFn loss = [&, which](Tape& tape, const BoundParams& p) {
      ModelBound m = bind_mixed(tape, p, which);
      Var log_q = classify(tape, m, cfg, batch);
      return scale(
          mean(unlabeled_bound_enumerated(tape, m, cfg, batch, log_q, 0.7, eps, dec_in).bound),
          -1.0);
    };
    push("unlabeled_bound_enumerated", name, finite_difference_check(loss, *set, opt));
  }
  {  // S1 regression MSE
    ParamSet reg;
    reg.add("c", Tensor::full({1}, 0.3));
    const std::vector<double> targets{-1.2, -0.4, -2.0};
    LossFn loss = [&](Tape& tape, const BoundParams& p) {
      Tensor t({targets.size()}, std::vector<double>(targets.begin(), targets.end()));
      Var diff = sub(tape.constant(std::move(t)), broadcast(p["c"], Shape{targets.size()}));
      return mean(mul(diff, diff));
    };
    push("s1_regression", "baseline", finite_difference_check(loss, reg, opt));
  }
  return rows;
}

namespace {

int cmd_gradcheck(bool corrupt) {
  std::vector<std::string> log;
  const double tol = 1e-4;
  auto rows = run_gradcheck(tol, corrupt, &log);
  bool ok = true;
  std::cout << "component / group: max relative error vs central differences (tol " << tol
            << ")\n";
  for (std::size_t i = 0; i < rows.size(); ++i) {
    const bool pass = rows[i].max_rel_err < tol;
    ok = ok && pass;
    std::cout << (pass ? "  ok   " : "  FAIL ") << log[i] << '\n';
  }
  return ok ? kExitOk : kExitCheckFailed;
}

}  // namespace

int cli_main(int argc, const char* const* argv) {
  CLI::App app{"semi-supervised sequential VAE for text classification"};
  app.require_subcommand(1);

  CommonOpts common;
  bool dry_run = false;
  auto* train = app.add_subcommand("train", "train a model and write the run directory");
  train->add_option("--config", common.config_path, "key=value config file");
  train->add_option("--set", common.sets, "override a config key, e.g. --set epochs=3");
  train->add_option("--seed", common.seed, "override the run seed");
  train->add_option("--epochs", common.epochs, "override the epoch count");
  train->add_option("--out", common.out_dir, "output directory");
  train->add_flag("--dry-run", dry_run, "validate and echo the config, no training");

  std::string run_dir, checkpoint, data_path;
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
  eval_cmd->add_option("--run", run_dir, "run directory from train")->required();
  eval_cmd->add_option("--checkpoint", checkpoint, "checkpoint override");
  eval_cmd->add_option("--data", data_path, "labeled corpus to evaluate instead of the split");

  std::string gen_run, gen_ckpt, gen_mode = "greedy", labels_csv;
  std::size_t gen_count = 5, gen_max_len = 30;
  double temperature = 1.0;
  bool paired = false;
  std::uint64_t gen_seed = 1;
  auto* gen = app.add_subcommand("generate", "sample sequences conditioned on labels");
  gen->add_option("--run", gen_run, "run directory")->required();
  gen->add_option("--checkpoint", gen_ckpt, "checkpoint override");
  gen->add_option("--labels", labels_csv, "comma-separated labels (default: all classes)");
  gen->add_option("--count", gen_count, "sequences per label");
  gen->add_option("--mode", gen_mode, "greedy | sample");
  gen->add_option("--temperature", temperature, "softmax temperature for sample mode");
  gen->add_flag("--paired", paired, "share one z across the labels of each index");
  gen->add_option("--max-len", gen_max_len, "generation cap");
  gen->add_option("--seed", gen_seed, "generation seed");

  bool corrupt = false;
  auto* gc = app.add_subcommand("gradcheck", "finite-difference sweep over all components");
  gc->add_flag("--corrupt", corrupt,
               "negative control: perturb one analytic gradient and expect failure");

  std::string pv_run, pv_kind = "sample", pv_baseline = "none", pv_out;
  int pv_k = 0;
  std::size_t pv_n = 1000, pv_coords = 50;
  std::uint64_t pv_seed = 1;
  auto* pv = app.add_subcommand("probe-variance",
                                "mean/variance of the classifier-gradient estimator");
  pv->add_option("--run", pv_run, "run directory (default: fresh toy model)");
  pv->add_option("--estimator", pv_kind, "enumerate | sample");
  pv->add_option("--baseline", pv_baseline, "none | s1 | s2");
  pv->add_option("--k", pv_k, "sample count per draw");
  pv->add_option("--n", pv_n, "number of independent draws");
  pv->add_option("--coords", pv_coords, "probed coordinates");
  pv->add_option("--seed", pv_seed, "probe seed");
  pv->add_option("--out", pv_out, "CSV path (default: stdout)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  }

  try {
    if (*train) return cmd_train(common, dry_run);
    if (*eval_cmd) return cmd_eval(run_dir, checkpoint, data_path);
    if (*gen) {
      std::vector<int> labels;
      if (!labels_csv.empty()) {
        std::istringstream ls(labels_csv);
        std::string item;
        while (std::getline(ls, item, ',')) labels.push_back(std::stoi(item));
      }
      return cmd_generate(gen_run, gen_ckpt, labels, gen_count, gen_mode, temperature, paired,
                          gen_max_len, gen_seed);
    }
    if (*gc) return cmd_gradcheck(corrupt);
    if (*pv) {
      return cmd_probe_variance(pv_run, pv_kind, pv_baseline, pv_k, pv_n, pv_coords, pv_seed,
                                pv_out);
    }
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    const std::string what = e.what();
    std::cerr << "error: " << what << '\n';
    if (what.find("checkpoint-incompatible") != std::string::npos ||
        what.find("checkpoint") != std::string::npos) {
      return kExitCheckpoint;
    }
    return kExitCheckFailed;
  }
  return kExitOk;
}

int cli_main(const std::vector<std::string>& args) {
  std::vector<const char*> argv;
  argv.push_back("ssvae");
  for (const auto& a : args) argv.push_back(a.c_str());
  return cli_main(static_cast<int>(argv.size()), argv.data());
}

}  // namespace ssvae
