// Acceptance suite: one pass/fail line per criterion. Run with no
// arguments for the full gate, or with criterion numbers to rerun a
// subset (e.g. ./acceptance 4 5).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>

#include "ssvae/cli.hpp"
#include "ssvae/diagnostics.hpp"
#include "ssvae/training.hpp"
#include "test_support.hpp"

using namespace ssvae;

namespace {

using Clock = std::chrono::steady_clock;

double secs_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
  bool pass;
  std::string detail;
};

// ---- shared toy model for criteria 2 and 3 --------------------------------

struct ToyModel {
  ModelConfig cfg;
  ModelParams params;  // frozen after 10 toy epochs
  Batch probe;         // unlabeled probe batch
  BaselineS1State s1;  // regression run to convergence on the probe batch
};

ToyModel build_toy_model() {
  SynthSpec synth;
  synth.classes = 2;
  synth.vocab = 60;
  synth.keywords_per_class = 8;
  synth.len_lo = 4;
  synth.len_hi = 8;
  synth.signal = 0.35;
  synth.size = 400;
  synth.seed = 11;
  auto docs = synth_corpus(synth);
  Vocab vocab = Vocab::build(docs, 400, 1);

  SplitSpec split;
  split.labeled_per_class = 20;
  split.valid_frac = 0.1;
  split.test_frac = 0.0;
  split.seed = 11;
  Splits splits = make_split(docs, split);

  ToyModel toy;
  toy.cfg.vocab_size = vocab.size();
  toy.cfg.classes = 2;
  toy.cfg.embed_width = 12;
  toy.cfg.cell_width = 32;
  toy.cfg.latent_width = 6;
  toy.cfg.decoder_cell = CellKind::Clstm2;
  toy.cfg.dropout = 0.0;

  TrainOptions opt;
  opt.epochs = 10;
  opt.batch_size = 16;
  opt.seed = 11;
  opt.dropout = 0.0;
  opt.patience = 0;
  opt.track_d_index = false;
  TrainResult r = train_model(toy.cfg, opt, splits, vocab);
  toy.params = r.final_params;

  toy.probe = make_batches(splits.unlabeled, vocab, 8, 13, false, false).front();

  // settle the S1 scalar on the probe batch
  const Tensor eps = RngStream(14).draw_normal({toy.probe.n, toy.cfg.latent_width});
  const auto dec_in = shifted_decoder_inputs(toy.probe);
  Tape tape;
  ModelBound m = bind_model(tape, toy.params, false);
  std::vector<double> targets;
  for (std::size_t c = 0; c < toy.cfg.classes; ++c) {
    BoundVars b = labeled_bound_with(tape, m, toy.cfg, toy.probe,
                                     one_hot_same(static_cast<int>(c), toy.probe.n, 2), 1.0,
                                     eps, dec_in);
    auto t = baseline_s1_targets(
        std::vector<double>(b.bound.value().data().begin(), b.bound.value().data().end()),
        toy.probe.lengths);
    targets.insert(targets.end(), t.begin(), t.end());
  }
  for (int i = 0; i < 300; ++i) toy.s1 = baseline_s1_update(toy.s1, targets, 0.05);
  return toy;
}

// ---- shared semi-supervised experiments for criteria 4, 5, 6 --------------

struct SemiRuns {
  std::vector<TrainReport> supervised;
  std::vector<TrainReport> ssvae;
  std::vector<TrainReport> vanilla;
  std::vector<std::vector<double>> final_unit_kl;  // per seed, from the ssvae run
  std::vector<double> kl_additivity_err;
  double wall_sec = 0.0;
};

constexpr std::size_t kSemiSeeds = 3;
constexpr std::size_t kSsvaeEpochs = 16;
constexpr std::size_t kVanillaEpochs = 10;

struct SemiSetup {
  ModelConfig model;
  Splits splits;
  Vocab vocab;
};

SemiSetup semi_setup(std::uint64_t seed, CellKind dec) {
  SynthSpec synth;
  synth.classes = 2;
  synth.vocab = 300;
  synth.keywords_per_class = 150;
  synth.len_lo = 5;
  synth.len_hi = 10;
  synth.signal = 0.3;
  synth.size = 5000;
  synth.seed = seed;
  auto docs = synth_corpus(synth);

  SemiSetup s;
  s.vocab = Vocab::build(docs, 1000, 1);

  SplitSpec split;
  split.labeled_per_class = 50;  // 2% of the corpus
  split.valid_frac = 0.1;
  split.test_frac = 0.1;
  split.seed = seed;
  s.splits = make_split(docs, split);

  s.model.vocab_size = s.vocab.size();
  s.model.classes = 2;
  s.model.embed_width = 16;
  s.model.cell_width = 32;
  s.model.latent_width = 8;
  s.model.decoder_cell = dec;
  s.model.dropout = 0.2;
  return s;
}

TrainOptions semi_options(std::uint64_t seed, bool use_unlabeled, std::size_t epochs,
                          std::size_t patience) {
  TrainOptions opt;
  opt.epochs = epochs;
  opt.batch_size = 32;
  opt.seed = seed;
  opt.dropout = 0.2;
  opt.patience = patience;
  opt.use_unlabeled = use_unlabeled;
  return opt;
}

SemiRuns run_semi_experiments() {
  const auto t0 = Clock::now();
  SemiRuns runs;
  for (std::size_t i = 0; i < kSemiSeeds; ++i) {
    const std::uint64_t seed = 100 + i;
    {
      SemiSetup s = semi_setup(seed, CellKind::Clstm2);
      runs.supervised.push_back(
          train_model(s.model, semi_options(seed, false, 40, 10), s.splits, s.vocab).report);

      TrainResult ssvae =
          train_model(s.model, semi_options(seed, true, kSsvaeEpochs, 0), s.splits, s.vocab);
      runs.ssvae.push_back(ssvae.report);

      auto valid_batches = make_batches(s.splits.valid, s.vocab, 32, 7, false, true);
      auto units = per_unit_kl(ssvae.final_params, s.model, valid_batches);
      double total_from_units = 0.0;
      for (double u : units) total_from_units += u;
      double total = 0.0;
      std::size_t count = 0;
      for (const auto& b : valid_batches) {
        Tape tape;
        ModelBound m = bind_model(tape, ssvae.final_params, false);
        Posterior post = encode(tape, m, s.model, b, one_hot(*b.labels, 2));
        total += sum(gaussian_kl(post)).value().item();
        count += b.n;
      }
      total /= static_cast<double>(count);
      runs.final_unit_kl.push_back(units);
      runs.kl_additivity_err.push_back(std::abs(total - total_from_units));
    }
    {
      SemiSetup v = semi_setup(seed, CellKind::Vanilla);
      runs.vanilla.push_back(
          train_model(v.model, semi_options(seed, true, kVanillaEpochs, 0), v.splits, v.vocab)
              .report);
    }
  }
  runs.wall_sec = secs_since(t0);
  return runs;
}

double mean_best_valid(const std::vector<TrainReport>& reports) {
  double acc = 0.0;
  for (const auto& r : reports) acc += r.best_valid_accuracy;
  return acc / static_cast<double>(reports.size());
}

// seed-mean D index at one epoch
double mean_d(const std::vector<TrainReport>& reports, std::size_t epoch) {
  double acc = 0.0;
  for (const auto& r : reports) acc += r.rows.at(epoch).d_index;
  return acc / static_cast<double>(reports.size());
}

// ---- criteria --------------------------------------------------------------

Outcome criterion1_gradcheck() {
  const auto t0 = Clock::now();
  auto rows = run_gradcheck(1e-4, false);
  double worst = 0.0;
  for (const auto& r : rows) worst = std::max(worst, r.max_rel_err);
  const double elapsed = secs_since(t0);
  std::ostringstream os;
  os << rows.size() << " components, max rel err " << worst << ", " << elapsed << "s";
  return {worst < 1e-4 && elapsed < 300.0, os.str()};
}

Outcome criterion2_estimator_equivalence(const ToyModel& toy) {
  const auto t0 = Clock::now();
  const std::size_t draws = 10000, coords = 50;
  std::ostringstream os;
  bool ok = true;
  for (auto [baseline, label] : {std::pair{BaselineKind::None, "none"},
                                 std::pair{BaselineKind::S1, "S1"},
                                 std::pair{BaselineKind::S2, "S2"}}) {
    EstimatorConfig est{EstimatorKind::Sample, baseline, 0};
    auto r = ssvae::testing::check_unbiasedness(toy.params, toy.cfg, toy.probe, est, toy.s1,
                                                draws, coords, 211);
    ok = ok && r.max_z < 3.0 && r.worst_abs_diff < 1e-9;
    os << label << " max|z|=" << r.max_z << "  ";
  }
  const double elapsed = secs_since(t0);
  os << elapsed << "s";
  return {ok && elapsed < 600.0, os.str()};
}

Outcome criterion3_variance_reduction(const ToyModel& toy) {
  const std::size_t draws = 1000, coords = 50;
  auto median_variance = [&](EstimatorConfig est) {
    auto rows = estimator_variance_probe(toy.params, toy.cfg, toy.probe, est, toy.s1, 1.0,
                                         draws, coords, 31);
    std::vector<double> v;
    for (const auto& r : rows) v.push_back(r.variance);
    std::sort(v.begin(), v.end());
    return v[v.size() / 2];
  };
  const double none = median_variance({EstimatorKind::Sample, BaselineKind::None, 2});
  const double s2 = median_variance({EstimatorKind::Sample, BaselineKind::S2, 2});
  const double s1 = median_variance({EstimatorKind::Sample, BaselineKind::S1, 1});
  std::ostringstream os;
  os << "median var none=" << none << " S1=" << s1 << " S2=" << s2
     << (s1 > s2 ? " (S1 weaker than S2, matching the reported trend)"
                 : " (S1 not weaker than S2 here; trend is directional only)");
  return {s2 < none, os.str()};
}

Outcome criterion4_semi_supervised_gain(const SemiRuns& runs) {
  const double sup = mean_best_valid(runs.supervised);
  const double semi = mean_best_valid(runs.ssvae);
  const double gain = semi - sup;
  std::ostringstream os;
  os << "supervised " << sup << ", ssvae-II " << semi << ", gain " << gain << " over "
     << kSemiSeeds << " seeds, " << runs.wall_sec << "s total";
  const bool band = sup >= 0.65 && sup <= 0.80;
  return {band && gain >= 0.05 && runs.wall_sec < 1800.0, os.str()};
}

Outcome criterion5_vanilla_failure(const SemiRuns& runs) {
  double max_vanilla_dev = 0.0;
  for (std::size_t e = 0; e < kVanillaEpochs; ++e) {
    max_vanilla_dev = std::max(max_vanilla_dev, std::abs(mean_d(runs.vanilla, e) - 0.5));
  }
  double best_clstm2_d = 0.0;
  for (std::size_t e = 0; e < std::min<std::size_t>(10, kSsvaeEpochs); ++e) {
    best_clstm2_d = std::max(best_clstm2_d, mean_d(runs.ssvae, e));
  }
  std::ostringstream os;
  os << "vanilla max |D-0.5| = " << max_vanilla_dev << " over 10 epochs; clstm2 D reaches "
     << best_clstm2_d << " by epoch 10";
  return {max_vanilla_dev <= 0.05 && best_clstm2_d >= 0.65, os.str()};
}

Outcome criterion6_kl_diagnostics(const SemiRuns& runs) {
  // collapse pattern on the first seed's trained model
  const auto& units = runs.final_unit_kl.front();
  double hi = 0.0, lo = 1e300;
  for (double u : units) {
    hi = std::max(hi, u);
    lo = std::min(lo, u);
  }
  double add_err = 0.0;
  for (double e : runs.kl_additivity_err) add_err = std::max(add_err, e);
  std::ostringstream os;
  os << "max unit " << hi << " nat, min unit " << lo << " nat, additivity err " << add_err;
  return {hi > 0.1 && lo < 0.01 && add_err < 1e-10, os.str()};
}

Outcome criterion7_closed_forms() {
  Tape tape;
  Posterior standard{tape.constant(Tensor::zeros({1, 4})), tape.constant(Tensor::zeros({1, 4}))};
  const double kl0 = gaussian_kl(standard).value().item();

  bool entropy_ok = true;
  for (std::size_t c : {2, 3, 7}) {
    Tensor lp({1, c}, std::vector<double>(c, -std::log(static_cast<double>(c))));
    const double h = categorical_entropy(tape.constant(lp)).value().item();
    entropy_ok = entropy_ok && std::abs(h - std::log(static_cast<double>(c))) < 1e-12;
  }

  ModelConfig two_class;
  two_class.classes = 2;
  const double prior = two_class.log_prior_y();
  const bool prior_ok = std::abs(prior - (-0.6931471805599453)) < 1e-9;

  std::ostringstream os;
  os << "kl(0,1)=" << kl0 << ", entropy(uniform)=ln C, log p(y) C=2 = " << prior;
  return {kl0 == 0.0 && entropy_ok && prior_ok, os.str()};
}

Outcome criterion8_determinism() {
  bool ok = true;
  std::ostringstream os;
  for (auto [kind, baseline, label] :
       {std::tuple{EstimatorKind::Enumerate, BaselineKind::None, "enumerate"},
        std::tuple{EstimatorKind::Sample, BaselineKind::S2, "sample-S2"}}) {
    SynthSpec synth;
    synth.classes = 2;
    synth.vocab = 50;
    synth.keywords_per_class = 6;
    synth.len_lo = 4;
    synth.len_hi = 7;
    synth.signal = 0.4;
    synth.size = 240;
    synth.seed = 81;
    auto docs = synth_corpus(synth);
    Vocab vocab = Vocab::build(docs, 400, 1);
    SplitSpec split;
    split.labeled_per_class = 12;
    split.valid_frac = 0.15;
    split.seed = 81;
    Splits splits = make_split(docs, split);

    ModelConfig cfg;
    cfg.vocab_size = vocab.size();
    cfg.embed_width = 8;
    cfg.cell_width = 12;
    cfg.latent_width = 4;
    cfg.dropout = 0.1;

    TrainOptions opt;
    opt.epochs = 3;
    opt.batch_size = 16;
    opt.seed = 81;
    opt.dropout = 0.1;
    opt.patience = 0;
    opt.estimator = EstimatorConfig{kind, baseline, 0};

    TrainResult a = train_model(cfg, opt, splits, vocab);
    TrainResult b = train_model(cfg, opt, splits, vocab);
    const std::string csv_a = train_report_csv(a.report, cfg.latent_width);
    const std::string csv_b = train_report_csv(b.report, cfg.latent_width);
    std::istringstream ia(csv_a), ib(csv_b);
    std::string la, lb;
    bool same = params_fingerprint(a.final_params) == params_fingerprint(b.final_params);
    while (std::getline(ia, la) && std::getline(ib, lb)) {
      same = same && csv_row_without_wall(la) == csv_row_without_wall(lb);
    }
    ok = ok && same;
    os << label << (same ? " bit-identical; " : " DIVERGED; ");
  }
  return {ok, os.str()};
}

Outcome criterion9_sampling_speed() {
  SynthSpec synth;
  synth.classes = 4;
  synth.vocab = 200;
  synth.keywords_per_class = 40;
  synth.len_lo = 5;
  synth.len_hi = 10;
  synth.signal = 0.3;
  synth.size = 1200;
  synth.seed = 91;
  auto docs = synth_corpus(synth);
  Vocab vocab = Vocab::build(docs, 800, 1);
  SplitSpec split;
  split.labeled_per_class = 25;
  split.valid_frac = 0.1;
  split.seed = 91;
  Splits splits = make_split(docs, split);

  ModelConfig cfg;
  cfg.vocab_size = vocab.size();
  cfg.classes = 4;
  cfg.embed_width = 16;
  cfg.cell_width = 32;
  cfg.latent_width = 8;
  cfg.dropout = 0.2;

  auto epoch_wall = [&](EstimatorConfig est) {
    TrainOptions opt;
    opt.epochs = 1;
    opt.batch_size = 32;
    opt.seed = 91;
    opt.dropout = 0.2;
    opt.patience = 0;
    opt.track_d_index = false;
    opt.estimator = est;
    TrainResult r = train_model(cfg, opt, splits, vocab);
    return r.report.rows.front().wall_sec;
  };

  const double enum_wall = epoch_wall({EstimatorKind::Enumerate, BaselineKind::None, 0});
  const double s1_wall = epoch_wall({EstimatorKind::Sample, BaselineKind::S1, 1});
  std::ostringstream os;
  os << "epoch wall: enumerate " << enum_wall << "s vs sample-S1 " << s1_wall << "s";
  return {s1_wall < enum_wall, os.str()};
}

}  // namespace

int main(int argc, char** argv) {
  std::set<int> wanted;
  for (int i = 1; i < argc; ++i) wanted.insert(std::atoi(argv[i]));
  auto selected = [&](int id) { return wanted.empty() || wanted.count(id) > 0; };

  std::optional<ToyModel> toy;
  auto get_toy = [&]() -> const ToyModel& {
    if (!toy) toy = build_toy_model();
    return *toy;
  };
  std::optional<SemiRuns> semi;
  auto get_semi = [&]() -> const SemiRuns& {
    if (!semi) semi = run_semi_experiments();
    return *semi;
  };

  const std::vector<std::pair<int, std::string>> names{
      {1, "gradient correctness across every component"},
      {2, "sampled estimators match enumeration within 3 SE"},
      {3, "S2 baseline reduces estimator variance"},
      {4, "semi-supervised gain of SSVAE-II over supervised"},
      {5, "vanilla decoder D stalls while CLSTM-II discriminates"},
      {6, "per-unit KL collapse pattern and additivity"},
      {7, "closed-form identities"},
      {8, "bitwise deterministic training reports"},
      {9, "sampling trains faster per epoch than enumeration"},
  };

  int failures = 0;
  for (const auto& [id, name] : names) {
    if (!selected(id)) continue;
    Outcome o{false, "not run"};
    try {
      switch (id) {
        case 1: o = criterion1_gradcheck(); break;
        case 2: o = criterion2_estimator_equivalence(get_toy()); break;
        case 3: o = criterion3_variance_reduction(get_toy()); break;
        case 4: o = criterion4_semi_supervised_gain(get_semi()); break;
        case 5: o = criterion5_vanilla_failure(get_semi()); break;
        case 6: o = criterion6_kl_diagnostics(get_semi()); break;
        case 7: o = criterion7_closed_forms(); break;
        case 8: o = criterion8_determinism(); break;
        case 9: o = criterion9_sampling_speed(); break;
      }
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "[PASS]" : "[FAIL]") << " criterion " << id << ": " << name << " ("
              << o.detail << ")\n"
              << std::flush;
  }
  return failures == 0 ? 0 : 1;
}
