#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "ssvae/diagnostics.hpp"
#include "ssvae/training.hpp"
#include "test_support.hpp"

using namespace ssvae;
using ssvae::testing::tiny_batch;
using ssvae::testing::tiny_config;

TEST_CASE("d-index tally on a synthetic bound matrix") {
  // oracle decoder: bound +1 for the true label, 0 otherwise
  const std::vector<int> labels{0, 1, 1, 0};
  std::vector<std::vector<double>> oracle(2, std::vector<double>(4, 0.0));
  for (std::size_t i = 0; i < labels.size(); ++i) oracle[labels[i]][i] = 1.0;
  DIndexReport r = d_index_from_bounds(oracle, labels);
  CHECK(r.value == 1.0);
  CHECK(r.per_class_correct[0] == 2);
  CHECK(r.per_class_correct[1] == 2);

  // equal bounds tie-break toward the lowest index: base rate on balance
  std::vector<std::vector<double>> flat(2, std::vector<double>(4, -3.0));
  CHECK(d_index_from_bounds(flat, labels).value == 0.5);

  CHECK_THROWS_AS(d_index_from_bounds({}, {}), std::invalid_argument);
}

TEST_CASE("a decoder that provably ignores the label scores the tie-break base rate") {
  ModelConfig cfg = tiny_config(CellKind::Vanilla);
  RngStream rng(1);
  ModelParams params = init_model(cfg, rng);
  // zero the label rows of both initial-state projections: y cannot reach
  // the decoder along any path in vanilla mode
  for (const char* head : {"init_h", "init_c"}) {
    Tensor& W = params.decoder.at(std::string(head) + ".W");
    for (std::size_t r = 0; r < cfg.classes; ++r) {
      for (std::size_t j = 0; j < W.cols(); ++j) W.at(r, j) = 0.0;
    }
  }
  // balanced labeled batch; encoder still sees y, which cannot influence
  // the bound ordering because mu/sigma enter both labels' bounds... they
  // do differ, so zero the label columns of the encoder heads as well
  for (const char* head : {"mu", "logvar"}) {
    Tensor& W = params.encoder.at(std::string(head) + ".W");
    for (std::size_t r = cfg.cell_width; r < cfg.cell_width + cfg.classes; ++r) {
      for (std::size_t j = 0; j < W.cols(); ++j) W.at(r, j) = 0.0;
    }
  }
  std::vector<Batch> batches{tiny_batch(6, 5, cfg.vocab_size, 2, true, 0)};
  DIndexReport r = discrimination_index(params, cfg, batches, 3);
  CHECK(r.value == 0.5);  // exact ties, lowest index wins, balanced labels
}

TEST_CASE("per-unit KL") {
  ModelConfig cfg = tiny_config();
  RngStream rng(11);
  ModelParams params = init_model(cfg, rng);
  std::vector<Batch> batches{tiny_batch(5, 4, cfg.vocab_size, 12)};

  SUBCASE("zero heads collapse every unit to exactly zero") {
    ModelParams zero = params;
    for (auto& [name, t] : zero.encoder.entries()) {
      if (name.rfind("mu.", 0) == 0 || name.rfind("logvar.", 0) == 0) {
        t = Tensor::zeros(t.shape());
      }
    }
    auto units = per_unit_kl(zero, cfg, batches);
    REQUIRE(units.size() == cfg.latent_width);
    for (double u : units) CHECK(u == 0.0);
  }

  SUBCASE("unit values are nonnegative and sum to the total mean KL") {
    auto units = per_unit_kl(params, cfg, batches);
    double total_from_units = 0.0;
    for (double u : units) {
      CHECK(u >= 0.0);
      total_from_units += u;
    }
    Tape tape;
    ModelBound m = bind_model(tape, params, false);
    Posterior post =
        encode(tape, m, cfg, batches[0], one_hot(*batches[0].labels, cfg.classes));
    const double total = mean(gaussian_kl(post)).value().item();
    CHECK(std::abs(total - total_from_units) < 1e-10);  // additivity
  }
}

TEST_CASE("latent dump format and determinism") {
  ModelConfig cfg = tiny_config();
  cfg.latent_width = 50;
  RngStream rng(21);
  ModelParams params = init_model(cfg, rng);
  std::vector<Batch> batches{tiny_batch(4, 4, cfg.vocab_size, 22),
                             tiny_batch(3, 5, cfg.vocab_size, 23)};

  const std::string p1 = "/tmp/ssvae_latents_a.csv";
  const std::string p2 = "/tmp/ssvae_latents_b.csv";
  dump_latents(params, cfg, batches, 24, p1);
  dump_latents(params, cfg, batches, 24, p2);

  std::ifstream f1(p1), f2(p2);
  std::stringstream s1, s2;
  s1 << f1.rdbuf();
  s2 << f2.rdbuf();
  CHECK(s1.str() == s2.str());  // identical bytes under one seed

  std::istringstream lines(s1.str());
  std::string line;
  std::getline(lines, line);
  // header: id,label,z_0..z_49 -> 52 columns
  CHECK(std::count(line.begin(), line.end(), ',') == 51);
  std::size_t rows = 0;
  while (std::getline(lines, line)) ++rows;
  CHECK(rows == 7);
}

TEST_CASE("generation mechanics") {
  ModelConfig cfg = tiny_config();
  RngStream rng(31);
  ModelParams params = init_model(cfg, rng);
  RngStream zr(32);
  const Tensor z = zr.draw_normal({cfg.latent_width});

  SUBCASE("max-len zero gives an empty sequence") {
    CHECK(generate(params, cfg, 0, z, GenMode::Greedy, 1.0, 0, 33).empty());
  }

  SUBCASE("greedy is deterministic") {
    auto a = generate(params, cfg, 1, z, GenMode::Greedy, 1.0, 12, 34);
    auto b = generate(params, cfg, 1, z, GenMode::Greedy, 1.0, 12, 99);  // seed ignored
    CHECK(a == b);
  }

  SUBCASE("the temperature -> 0 limit recovers greedy") {
    auto greedy = generate(params, cfg, 0, z, GenMode::Greedy, 1.0, 12, 35);
    auto cold = generate(params, cfg, 0, z, GenMode::Sample, 1e-9, 12, 35);
    CHECK(greedy == cold);
  }

  SUBCASE("sample mode rejects nonpositive temperatures") {
    CHECK_THROWS_AS(generate(params, cfg, 0, z, GenMode::Sample, 0.0, 5, 36),
                    std::invalid_argument);
  }

  SUBCASE("wrong latent width is an error") {
    CHECK_THROWS_AS(generate(params, cfg, 0, Tensor::zeros({cfg.latent_width + 1}),
                             GenMode::Greedy, 1.0, 5, 37),
                    std::invalid_argument);
  }
}
