#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>

#include "doctest.h"
#include "ssvae/estimators.hpp"
#include "ssvae/gradcheck.hpp"
#include "ssvae/model.hpp"
#include "test_support.hpp"

using namespace ssvae;
using ssvae::testing::tiny_batch;
using ssvae::testing::tiny_config;

namespace {

void zero_entries(ParamSet& ps, const std::string& prefix) {
  for (auto& [name, t] : ps.entries()) {
    if (name.rfind(prefix, 0) == 0) t = Tensor::zeros(t.shape());
  }
}

}  // namespace

TEST_CASE("encode with zero heads gives mu=0, sigma=1") {
  const ModelConfig cfg = tiny_config();
  RngStream rng(1);
  ModelParams params = init_model(cfg, rng);
  zero_entries(params.encoder, "mu.");
  zero_entries(params.encoder, "logvar.");
  const Batch batch = tiny_batch(4, 5, cfg.vocab_size, 2);
  Tape tape;
  ModelBound m = bind_model(tape, params, false);
  Posterior post = encode(tape, m, cfg, batch, one_hot(*batch.labels, cfg.classes));
  for (std::size_t i = 0; i < post.mu.value().size(); ++i) {
    CHECK(post.mu.value()[i] == 0.0);
    CHECK(post.log_var.value()[i] == 0.0);  // sigma = exp(0) = 1
  }
}

TEST_CASE("encode depends on the label under random weights") {
  const ModelConfig cfg = tiny_config();
  RngStream rng(3);
  ModelParams params = init_model(cfg, rng);
  const Batch batch = tiny_batch(2, 5, cfg.vocab_size, 4);
  Tape tape;
  ModelBound m = bind_model(tape, params, false);
  Posterior a = encode(tape, m, cfg, batch, one_hot({0, 0}, cfg.classes));
  Posterior b = encode(tape, m, cfg, batch, one_hot({1, 1}, cfg.classes));
  double diff = 0.0;
  for (std::size_t i = 0; i < a.mu.value().size(); ++i) {
    diff = std::max(diff, std::abs(a.mu.value()[i] - b.mu.value()[i]));
  }
  CHECK(diff > 0.0);

  CHECK_THROWS_WITH_AS(encode(tape, m, cfg, batch, one_hot({0, 1}, 3)),
                       doctest::Contains("label width"), std::invalid_argument);
}

TEST_CASE("reparameterization identities") {
  Tape tape;
  Tensor mu({2, 3}, {1, 2, 3, 4, 5, 6});
  Posterior post{tape.constant(mu), tape.constant(Tensor::zeros({2, 3}))};
  Var z0 = reparameterize(post, Tensor::zeros({2, 3}));
  for (std::size_t i = 0; i < 6; ++i) CHECK(z0.value()[i] == mu[i]);  // eps = 0 -> z = mu

  Tensor e({2, 3}, {0.3, -0.2, 1.5, -0.7, 0.0, 2.0});
  Posterior unit{tape.constant(Tensor::zeros({2, 3})), tape.constant(Tensor::zeros({2, 3}))};
  Var ze = reparameterize(unit, e);
  for (std::size_t i = 0; i < 6; ++i) CHECK(ze.value()[i] == e[i]);
}

TEST_CASE("reparameterized sample variance matches sigma^2") {
  // sigma = 2 -> var 4 +- 0.1 over 1e5 draws
  const std::size_t n = 100000;
  Tape tape;
  Posterior post{tape.constant(Tensor::zeros({n, 1})),
                 tape.constant(Tensor::full({n, 1}, 2.0 * std::log(2.0)))};
  RngStream rng(77);
  Var z = reparameterize(post, rng.draw_normal({n, 1}));
  double s = 0.0, s2 = 0.0;
  for (std::size_t i = 0; i < n; ++i) {
    s += z.value()[i];
    s2 += z.value()[i] * z.value()[i];
  }
  const double var = (s2 - s * s / n) / (n - 1);
  CHECK(var == doctest::Approx(4.0).epsilon(0.025));
}

TEST_CASE("gaussian KL closed forms") {
  Tape tape;
  Posterior standard{tape.constant(Tensor::zeros({1, 4})), tape.constant(Tensor::zeros({1, 4}))};
  CHECK(gaussian_kl(standard).value().item() == 0.0);

  Posterior shifted{tape.constant(Tensor({1, 1}, {1.0})), tape.constant(Tensor::zeros({1, 1}))};
  CHECK(gaussian_kl(shifted).value().item() == doctest::Approx(0.5));
}

TEST_CASE("gaussian KL agrees with a Monte Carlo oracle within 1%") {
  const std::size_t d = 3;
  RngStream rng(11);
  Tensor mu({1, d}), lv({1, d});
  for (auto& v : mu.data()) v = rng.standard_normal();
  for (auto& v : lv.data()) v = 0.8 * rng.standard_normal();

  Tape tape;
  const double analytic =
      gaussian_kl(Posterior{tape.constant(mu), tape.constant(lv)}).value().item();

  // E_{z~q}[log q(z) - log p(z)] by direct sampling
  double acc = 0.0;
  const std::size_t n = 1000000;
  RngStream mc(12);
  for (std::size_t s = 0; s < n; ++s) {
    for (std::size_t i = 0; i < d; ++i) {
      const double sigma = std::exp(0.5 * lv[i]);
      const double eps = mc.standard_normal();
      const double z = mu[i] + sigma * eps;
      const double log_q = -0.5 * eps * eps - 0.5 * lv[i];  // -log sigma, constants cancel
      const double log_p = -0.5 * z * z;
      acc += log_q - log_p;
    }
  }
  const double mc_est = acc / static_cast<double>(n);
  CHECK(std::abs(mc_est - analytic) < 0.01 * std::max(1.0, std::abs(analytic)));
}

TEST_CASE("decode identities") {
  const ModelConfig cfg = tiny_config(CellKind::Vanilla);
  RngStream rng(21);
  ModelParams params = init_model(cfg, rng);

  SUBCASE("all-masked batch gives zero log-probability") {
    Batch empty = tiny_batch(2, 3, cfg.vocab_size, 5);
    empty.mask.assign(empty.mask.size(), 0.0);
    Tape tape;
    ModelBound m = bind_model(tape, params, false);
    Var z = tape.constant(Tensor::zeros({2, cfg.latent_width}));
    Var lp = decode_logprob(tape, m, cfg, cfg.decoder_cell, empty, one_hot({0, 1}, 2), z,
                            shifted_decoder_inputs(empty));
    CHECK(lp.value()[0] == 0.0);
    CHECK(lp.value()[1] == 0.0);
  }

  SUBCASE("zeroed output head gives -L * ln V") {
    ModelParams uniform = params;
    zero_entries(uniform.decoder, "out.");
    Batch batch = tiny_batch(3, 4, cfg.vocab_size, 6, true, 0);
    Tape tape;
    ModelBound m = bind_model(tape, uniform, false);
    Var z = tape.constant(Tensor::zeros({3, cfg.latent_width}));
    Var lp = decode_logprob(tape, m, cfg, cfg.decoder_cell, batch, one_hot({0, 1, 0}, 2), z,
                            shifted_decoder_inputs(batch));
    const double want = -4.0 * std::log(static_cast<double>(cfg.vocab_size));
    for (std::size_t i = 0; i < 3; ++i) CHECK(lp.value()[i] == doctest::Approx(want));
  }

  SUBCASE("gradient check w.r.t. z") {
    Batch batch = tiny_batch(2, 3, cfg.vocab_size, 7);
    ParamSet zp;
    RngStream zr(8);
    zp.add("z", zr.draw_normal({2, cfg.latent_width}));
    LossFn loss = [&](Tape& tape, const BoundParams& p) {
      ModelBound m = bind_model(tape, params, false);
      Var lp = decode_logprob(tape, m, cfg, cfg.decoder_cell, batch, one_hot({0, 1}, 2), p["z"],
                              shifted_decoder_inputs(batch));
      return mean(lp);
    };
    CHECK(finite_difference_check(loss, zp).max_rel_err < 1e-4);
  }
}

TEST_CASE("classifier identities") {
  const ModelConfig cfg = tiny_config();
  RngStream rng(31);
  ModelParams params = init_model(cfg, rng);
  const Batch batch = tiny_batch(4, 5, cfg.vocab_size, 32);

  SUBCASE("zero output head gives the uniform distribution") {
    ModelParams uni = params;
    zero_entries(uni.classifier, "out.");
    Tape tape;
    ModelBound m = bind_model(tape, uni, false);
    Var lq = classify(tape, m, cfg, batch);
    for (std::size_t i = 0; i < lq.value().size(); ++i) {
      CHECK(lq.value()[i] == doctest::Approx(-std::log(2.0)));
    }
  }

  SUBCASE("probabilities normalize within 1e-12") {
    Tape tape;
    ModelBound m = bind_model(tape, params, false);
    Var lq = classify(tape, m, cfg, batch);
    for (std::size_t i = 0; i < batch.n; ++i) {
      double s = 0.0;
      for (std::size_t c = 0; c < cfg.classes; ++c) s += std::exp(lq.value().at(i, c));
      CHECK(std::abs(s - 1.0) < 1e-12);
    }
  }
}

TEST_CASE("labeled bound structure") {
  const ModelConfig cfg = tiny_config();
  RngStream rng(41);
  ModelParams params = init_model(cfg, rng);
  const Batch batch = tiny_batch(3, 5, cfg.vocab_size, 42);
  const Tensor y = one_hot(*batch.labels, cfg.classes);
  const Tensor eps = RngStream(43).draw_normal({3, cfg.latent_width});
  const auto dec_in = shifted_decoder_inputs(batch);

  Tape tape;
  ModelBound m = bind_model(tape, params, false);
  BoundVars b0 = labeled_bound_with(tape, m, cfg, batch, y, 0.0, eps, dec_in);
  BoundVars b1 = labeled_bound_with(tape, m, cfg, batch, y, 1.0, eps, dec_in);

  CHECK(b0.log_prior_y == doctest::Approx(-std::log(2.0)).epsilon(1e-9));
  for (std::size_t i = 0; i < 3; ++i) {
    // kl_weight 0: bound = recon + log p(y) exactly
    CHECK(b0.bound.value()[i] == b0.recon.value()[i] + b0.log_prior_y);
    // kl_weight 1: bound = recon + log p(y) - kl exactly
    CHECK(b1.bound.value()[i] ==
          doctest::Approx(b1.recon.value()[i] + b1.log_prior_y - b1.kl.value()[i]).epsilon(1e-12));
    CHECK(b1.kl.value()[i] >= 0.0);
    CHECK(b1.recon.value()[i] <= 0.0);
  }
  auto reports = read_bound_reports(b1);
  CHECK(reports.size() == 3);
  CHECK(reports[0].bound == b1.bound.value()[0]);
}

TEST_CASE("labeled bound passes finite differences for every group") {
  const ModelConfig cfg = tiny_config();
  RngStream rng(51);
  ModelParams params = init_model(cfg, rng);
  const Batch batch = tiny_batch(2, 4, cfg.vocab_size, 52);
  const Tensor y = one_hot(*batch.labels, cfg.classes);
  const Tensor eps = RngStream(53).draw_normal({2, cfg.latent_width});
  const auto dec_in = shifted_decoder_inputs(batch);

  GradCheckOptions opt;
  opt.coords_per_tensor = 10;
  for (int which = 0; which < 2; ++which) {
    LossFn loss = [&, which](Tape& tape, const BoundParams& p) {
      ModelBound m{which == 0 ? p : BoundParams(tape, params.encoder, false),
                   which == 1 ? p : BoundParams(tape, params.decoder, false),
                   BoundParams(tape, params.classifier, false)};
      return scale(mean(labeled_bound_with(tape, m, cfg, batch, y, 0.6, eps, dec_in).bound),
                   -1.0);
    };
    ParamSet& group = which == 0 ? params.encoder : params.decoder;
    CHECK(finite_difference_check(loss, group, opt).max_rel_err < 1e-4);
  }
}

TEST_CASE("categorical entropy") {
  Tape tape;
  Var uniform = tape.constant(Tensor({1, 4}, std::vector<double>(4, std::log(0.25))));
  CHECK(categorical_entropy(uniform).value().item() == doctest::Approx(std::log(4.0)));

  Var lq = log_softmax(tape.constant(Tensor({1, 2}, {800.0, 0.0})), 1);
  CHECK(categorical_entropy(lq).value().item() == doctest::Approx(0.0).epsilon(1e-9));

  Var p = tape.constant(Tensor({1, 2}, {std::log(0.25), std::log(0.75)}));
  CHECK(categorical_entropy(p).value().item() == doctest::Approx(0.5623).epsilon(1e-4 / 0.5623));
}

TEST_CASE("enumerated unlabeled bound against a straight-line oracle") {
  const ModelConfig cfg = tiny_config();
  RngStream rng(61);
  ModelParams params = init_model(cfg, rng);
  Batch batch = tiny_batch(3, 5, cfg.vocab_size, 62, false);
  const Tensor eps = RngStream(63).draw_normal({3, cfg.latent_width});
  const auto dec_in = shifted_decoder_inputs(batch);

  Tape tape;
  ModelBound m = bind_model(tape, params, false);
  Var log_q = classify(tape, m, cfg, batch);
  UnlabeledVars u = unlabeled_bound_enumerated(tape, m, cfg, batch, log_q, 1.0, eps, dec_in);

  // independent re-computation: per-label bounds weighted by plain arithmetic
  for (std::size_t i = 0; i < 3; ++i) {
    double want = 0.0, ent = 0.0;
    for (std::size_t c = 0; c < cfg.classes; ++c) {
      Tape t2;
      ModelBound m2 = bind_model(t2, params, false);
      BoundVars bc = labeled_bound_with(t2, m2, cfg, batch,
                                        one_hot_same(static_cast<int>(c), batch.n, cfg.classes),
                                        1.0, eps, dec_in);
      const double q = std::exp(log_q.value().at(i, c));
      want += q * bc.bound.value()[i];
      ent -= q * log_q.value().at(i, c);
    }
    CHECK(std::abs(u.bound.value()[i] - (want + ent)) < 1e-10);
  }
}

TEST_CASE("enumerated bound limiting cases") {
  ModelConfig cfg = tiny_config();
  RngStream rng(71);
  ModelParams params = init_model(cfg, rng);
  Batch batch = tiny_batch(2, 4, cfg.vocab_size, 72, false);
  const Tensor eps = RngStream(73).draw_normal({2, cfg.latent_width});
  const auto dec_in = shifted_decoder_inputs(batch);

  SUBCASE("uniform classifier: 0.5(b0+b1) + ln 2") {
    ModelParams uni = params;
    zero_entries(uni.classifier, "out.");
    Tape tape;
    ModelBound m = bind_model(tape, uni, false);
    Var log_q = classify(tape, m, cfg, batch);
    UnlabeledVars u = unlabeled_bound_enumerated(tape, m, cfg, batch, log_q, 1.0, eps, dec_in);
    for (std::size_t i = 0; i < 2; ++i) {
      const double b0 = u.per_label[0].bound.value()[i];
      const double b1 = u.per_label[1].bound.value()[i];
      CHECK(u.bound.value()[i] == doctest::Approx(0.5 * (b0 + b1) + std::log(2.0)));
    }
  }

  SUBCASE("(near) one-hot classifier collapses to the labeled bound") {
    ModelParams hot = params;
    zero_entries(hot.classifier, "out.");
    hot.classifier.at("out.b") = Tensor({2}, {60.0, 0.0});  // q ~ (1, 1e-26)
    Tape tape;
    ModelBound m = bind_model(tape, hot, false);
    Var log_q = classify(tape, m, cfg, batch);
    UnlabeledVars u = unlabeled_bound_enumerated(tape, m, cfg, batch, log_q, 1.0, eps, dec_in);
    for (std::size_t i = 0; i < 2; ++i) {
      CHECK(std::abs(u.bound.value()[i] - u.per_label[0].bound.value()[i]) < 1e-9);
      CHECK(u.entropy.value()[i] < 1e-9);
    }
  }
}

TEST_CASE("initial-state plumbing is consistent between vanilla and conditional decoders") {
  // vanilla with the label rows of the init projection zeroed ==
  // conditional with all label pathways zeroed
  ModelConfig vcfg = tiny_config(CellKind::Vanilla);
  RngStream rng(81);
  ModelParams vparams = init_model(vcfg, rng);
  const std::size_t C = vcfg.classes, D = vcfg.latent_width;
  for (const char* head : {"init_h", "init_c"}) {
    Tensor& W = vparams.decoder.at(std::string(head) + ".W");  // (C+D, cell)
    for (std::size_t r = 0; r < C; ++r) {
      for (std::size_t j = 0; j < W.cols(); ++j) W.at(r, j) = 0.0;
    }
  }

  for (CellKind kind : {CellKind::Clstm1, CellKind::Clstm2}) {
    ModelConfig ccfg = vcfg;
    ccfg.decoder_cell = kind;
    ModelParams cparams = vparams;
    cparams.decoder = ParamSet{};
    for (const auto& [name, t] : vparams.decoder.entries()) {
      if (name.rfind("init_", 0) == 0 && name.ends_with(".W")) {
        Tensor zrows({D, t.cols()});
        for (std::size_t r = 0; r < D; ++r)
          for (std::size_t j = 0; j < t.cols(); ++j) zrows.at(r, j) = t.at(C + r, j);
        cparams.decoder.add(name, std::move(zrows));
      } else if (kind == CellKind::Clstm1 && name.find("lstm.W_w") != std::string::npos) {
        Tensor widened({t.rows() + C, t.cols()});  // label columns appended as zeros
        for (std::size_t r = 0; r < t.rows(); ++r)
          for (std::size_t j = 0; j < t.cols(); ++j) widened.at(r, j) = t.at(r, j);
        cparams.decoder.add(name, std::move(widened));
      } else {
        cparams.decoder.add(name, t);
      }
    }
    if (kind == CellKind::Clstm2) {
      cparams.decoder.add("lstm.W_yc", Tensor::zeros({C, vcfg.cell_width}));
    }

    Batch batch = tiny_batch(3, 5, vcfg.vocab_size, 82);
    const Tensor y = one_hot(*batch.labels, C);
    RngStream zr(83);
    const Tensor zval = zr.draw_normal({3, D});
    const auto dec_in = shifted_decoder_inputs(batch);

    Tape tape;
    ModelBound vm = bind_model(tape, vparams, false);
    ModelBound cm = bind_model(tape, cparams, false);
    Var v_lp = decode_logprob(tape, vm, vcfg, CellKind::Vanilla, batch, y, tape.constant(zval),
                              dec_in);
    Var c_lp = decode_logprob(tape, cm, ccfg, kind, batch, y, tape.constant(zval), dec_in);
    for (std::size_t i = 0; i < 3; ++i) {
      CHECK(v_lp.value()[i] == doctest::Approx(c_lp.value()[i]).epsilon(1e-12));
    }
  }
}

TEST_CASE("total objective reductions") {
  const ModelConfig cfg = tiny_config();
  RngStream rng(91);
  ModelParams params = init_model(cfg, rng);
  const Batch labeled = tiny_batch(3, 4, cfg.vocab_size, 92);
  EstimatorConfig est;

  SUBCASE("empty unlabeled batch leaves J = mean L + alpha CE") {
    Tape tape;
    ModelBound m = bind_model(tape, params, true);
    RngStream step(93);
    StepLosses losses =
        total_objective(tape, m, cfg, labeled, std::nullopt, est, {}, 1.5, 0.8, step, {});
    // recompute by hand with the same rng stream
    Tape t2;
    ModelBound m2 = bind_model(t2, params, false);
    RngStream step2(93);
    BoundVars lab = labeled_bound(t2, m2, cfg, labeled, one_hot(*labeled.labels, cfg.classes),
                                  0.8, step2);
    Var ce = classifier_cross_entropy(classify(t2, m2, cfg, labeled), *labeled.labels);
    const double want = -mean(lab.bound).value().item() + 1.5 * ce.value().item();
    CHECK(losses.total.value().item() == doctest::Approx(want).epsilon(1e-12));
    CHECK(losses.unlabeled_bound == 0.0);
  }

  SUBCASE("alpha 0 without unlabeled data leaves the classifier untouched") {
    Tape tape;
    ModelBound m = bind_model(tape, params, true);
    RngStream step(94);
    StepLosses losses =
        total_objective(tape, m, cfg, labeled, std::nullopt, est, {}, 0.0, 0.8, step, {});
    tape.backward(losses.total);
    GradMap clf = m.clf.collect_grads(params.classifier);
    for (const auto& [name, g] : clf) {
      for (std::size_t i = 0; i < g.size(); ++i) CHECK(g[i] == 0.0);
    }
  }
}
