#include <catch2/catch_amalgamated.hpp>

#include <cstdlib>
#include <sstream>
#include <string>
#include <vector>

#include "tagsong/gradcheck.hpp"
#include "tagsong/losses.hpp"
#include "tagsong/model.hpp"
#include "tagsong/model_check.hpp"
#include "tagsong/rmsprop.hpp"
#include "tagsong/trainer.hpp"

using namespace tagsong;
using Catch::Matchers::ContainsSubstring;
using Catch::Matchers::WithinAbs;

namespace {

std::vector<double> snapshot(Model& m) {
  std::vector<double> out;
  for_each_model_param(m, [&](const std::string&, Matrix& mat) {
    for (std::size_t i = 0; i < mat.size(); ++i) out.push_back(mat[i]);
  });
  return out;
}

ModelConfig toy_config(ModelKind kind) {
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.hidden_dim = 3;
  cfg.attn_dim = 3;
  cfg.k_tags = 2;
  cfg.tag_group = TagGroup::kObject;
  cfg.mlp_hidden = {4};
  cfg.combiner_hidden = {4};
  cfg.embedding_dim = 8;
  cfg.max_len = 6;
  cfg.bow_vocab_cap = 50;
  return cfg;
}

}  // namespace

TEST_CASE("mse_loss value and gradient") {
  const LossResult r = mse_loss(colvec({0.0, 1.0}), colvec({1.0, 0.0}));
  REQUIRE(r.value == 2.0);
  REQUIRE(r.d_prediction == colvec({-2.0, 2.0}));

  const LossResult zero = mse_loss(colvec({0.3, -0.2}), colvec({0.3, -0.2}));
  REQUIRE(zero.value == 0.0);
  REQUIRE(zero.d_prediction == Matrix(2, 1));

  REQUIRE_THROWS_AS(mse_loss(colvec({1.0}), colvec({1.0, 2.0})), ShapeError);
}

TEST_CASE("cosine_similarity basics") {
  REQUIRE_THAT(cosine_similarity(colvec({1.0, 0.0}), colvec({2.0, 0.0})), WithinAbs(1.0, 1e-15));
  REQUIRE_THAT(cosine_similarity(colvec({1.0, 0.0}), colvec({0.0, 3.0})), WithinAbs(0.0, 1e-15));
  REQUIRE_THAT(cosine_similarity(colvec({1.0, 1.0}), colvec({-2.0, -2.0})),
               WithinAbs(-1.0, 1e-15));
  REQUIRE_THROWS_AS(cosine_similarity(colvec({0.0, 0.0}), colvec({1.0, 0.0})), NumericError);
  REQUIRE_THROWS_AS(cosine_similarity(colvec({1.0, 0.0}), colvec({0.0, 0.0})), NumericError);
}

TEST_CASE("cosine_loss matches finite differences") {
  Rng rng(3);
  Matrix pred(4, 1), target(4, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    pred[i] = rng.next_uniform(-1.0, 1.0);
    target[i] = rng.next_uniform(-1.0, 1.0);
  }
  const LossResult r = cosine_loss(pred, target);
  REQUIRE_THAT(r.value, WithinAbs(-cosine_similarity(pred, target), 1e-15));

  const auto loss_fn = [&](const Matrix& p) { return cosine_loss(p, target).value; };
  REQUIRE(max_relative_error(r.d_prediction, finite_diff_grad(loss_fn, pred)) < 1e-6);

  // Colinear prediction: the loss bottoms out at -1 with a vanishing gradient.
  const LossResult best = cosine_loss(scaled(target, 2.0), target);
  REQUIRE_THAT(best.value, WithinAbs(-1.0, 1e-15));
  for (std::size_t i = 0; i < 4; ++i) REQUIRE_THAT(best.d_prediction[i], WithinAbs(0.0, 1e-15));
}

TEST_CASE("margin_loss activity regions") {
  const Matrix target = colvec({1.0, 0.0});
  const Matrix aligned = colvec({2.0, 0.0});
  const Matrix orthogonal = colvec({0.0, 1.0});

  // Satisfied by a full margin: cos(+)=1, cos(-)=0, 0.5 + 0 - 1 < 0.
  const MarginLossResult ok = margin_loss(aligned, orthogonal, target, 0.5);
  REQUIRE(ok.value == 0.0);
  REQUIRE(ok.d_positive == Matrix(2, 1));
  REQUIRE(ok.d_negative == Matrix(2, 1));

  // Identical candidates: the hinge sits at exactly the margin.
  const MarginLossResult tied = margin_loss(aligned, aligned, target, 1.0);
  REQUIRE_THAT(tied.value, WithinAbs(1.0, 1e-15));

  // Boundary raw == 0 stays inactive (margin 0, identical scores).
  const MarginLossResult edge = margin_loss(aligned, aligned, target, 0.0);
  REQUIRE(edge.value == 0.0);
  REQUIRE(edge.d_positive == Matrix(2, 1));

  REQUIRE_THROWS_AS(margin_loss(aligned, orthogonal, target, -0.1), ParameterError);
  REQUIRE_THROWS_AS(margin_loss(colvec({0.0, 0.0}), orthogonal, target, 1.0), NumericError);
}

TEST_CASE("margin_loss is scale invariant in its inputs' norms") {
  Rng rng(5);
  Matrix pos(3, 1), neg(3, 1), target(3, 1);
  for (std::size_t i = 0; i < 3; ++i) {
    pos[i] = rng.next_uniform(-1.0, 1.0);
    neg[i] = rng.next_uniform(-1.0, 1.0);
    target[i] = rng.next_uniform(-1.0, 1.0);
  }
  const double base = margin_loss(pos, neg, target, 1.0).value;
  REQUIRE_THAT(margin_loss(scaled(pos, 3.0), neg, target, 1.0).value, WithinAbs(base, 1e-12));
  REQUIRE_THAT(margin_loss(pos, scaled(neg, 0.25), target, 1.0).value, WithinAbs(base, 1e-12));
  REQUIRE_THAT(margin_loss(pos, neg, scaled(target, 7.0), 1.0).value, WithinAbs(base, 1e-12));
}

TEST_CASE("margin_loss gradients match finite differences when active") {
  Rng rng(7);
  Matrix pos(4, 1), neg(4, 1), target(4, 1);
  for (std::size_t i = 0; i < 4; ++i) {
    pos[i] = rng.next_uniform(-1.0, 1.0);
    neg[i] = rng.next_uniform(-1.0, 1.0);
    target[i] = rng.next_uniform(-1.0, 1.0);
  }
  const MarginLossResult r = margin_loss(pos, neg, target, 2.0);  // wide margin: active
  REQUIRE(r.value > 0.0);
  const auto pos_fn = [&](const Matrix& p) { return margin_loss(p, neg, target, 2.0).value; };
  const auto neg_fn = [&](const Matrix& n) { return margin_loss(pos, n, target, 2.0).value; };
  REQUIRE(max_relative_error(r.d_positive, finite_diff_grad(pos_fn, pos)) < 1e-6);
  REQUIRE(max_relative_error(r.d_negative, finite_diff_grad(neg_fn, neg)) < 1e-6);
}

TEST_CASE("loss kind parser round trips") {
  for (const char* s : {"mse", "cpl", "mrl"}) REQUIRE(to_string(parse_loss_kind(s)) == s);
  REQUIRE_THROWS_AS(parse_loss_kind("l2"), ConfigError);
}

TEST_CASE("rmsprop single step trace") {
  Rmsprop opt;
  Matrix theta(1, 1);
  opt.step("w", theta, colvec({1.0}));
  // acc = 0.1, delta = -0.001 / (sqrt(0.1) + 1e-8)
  REQUIRE_THAT(opt.state().at("w")[0], WithinAbs(0.1, 1e-15));
  REQUIRE_THAT(theta[0], WithinAbs(-0.0031622775601683824, 1e-15));

  opt.step("w", theta, colvec({1.0}));
  REQUIRE_THAT(opt.state().at("w")[0], WithinAbs(0.19, 1e-15));
  REQUIRE_THAT(theta[0], WithinAbs(-0.005456434846242423, 1e-15));
}

TEST_CASE("rmsprop zero gradient decays the accumulator but not the parameter") {
  Rmsprop opt;
  Matrix theta = colvec({0.5});
  opt.step("w", theta, colvec({1.0}));
  const double after_one = theta[0];
  opt.step("w", theta, colvec({0.0}));
  REQUIRE(theta[0] == after_one);
  REQUIRE_THAT(opt.state().at("w")[0], WithinAbs(0.09, 1e-15));
}

TEST_CASE("rmsprop moves against the gradient") {
  Rmsprop opt;
  Matrix theta = colvec({1.0, 1.0});
  opt.step("w", theta, colvec({0.7, -0.2}));
  REQUIRE(theta[0] < 1.0);
  REQUIRE(theta[1] > 1.0);
}

TEST_CASE("rmsprop keeps separate state per parameter name") {
  Rmsprop opt;
  Matrix a = colvec({0.0});
  Matrix b = colvec({0.0, 0.0});
  opt.step("a", a, colvec({1.0}));
  opt.step("b", b, colvec({1.0, 2.0}));
  REQUIRE(opt.state().size() == 2);
  REQUIRE(opt.state().at("b").size() == 2);
  // The same name must keep the same shape.
  Matrix widened = colvec({0.0, 0.0});
  REQUIRE_THROWS_AS(opt.step("a", widened, colvec({1.0, 1.0})), ShapeError);
}

TEST_CASE("rmsprop validates its config and gradients") {
  REQUIRE_THROWS_AS(Rmsprop({-0.1, 0.9, 1e-8}), ParameterError);
  REQUIRE_THROWS_AS(Rmsprop({0.001, 1.0, 1e-8}), ParameterError);
  REQUIRE_THROWS_AS(Rmsprop({0.001, 0.9, 0.0}), ParameterError);

  Rmsprop opt;
  Matrix theta = colvec({0.0});
  REQUIRE_THROWS_WITH(opt.step("embedding", theta, colvec({std::nan("")})),
                      ContainsSubstring("embedding"));
  REQUIRE_THROWS_AS(opt.step("w", theta, colvec({1.0, 2.0})), ShapeError);
}

TEST_CASE("epoch_seed derives distinct per-epoch streams") {
  REQUIRE(epoch_seed(7, 0) == 0x9e3779b97f4a7c12ULL);
  REQUIRE(epoch_seed(7, 1) == 0x3c6ef372fe94f82dULL);
  REQUIRE(epoch_seed(7, 0) != epoch_seed(7, 1));
  REQUIRE(epoch_seed(7, 0) != epoch_seed(8, 0));
}

TEST_CASE("format_loss round trips doubles") {
  for (double v : {0.5, 1.0 / 3.0, 1e-17, 123456.789, -0.0031622775601683824}) {
    REQUIRE(std::strtod(format_loss(v).c_str(), nullptr) == v);
  }
  REQUIRE(format_loss(0.5) == "0.5");
}

TEST_CASE("train logs one entry per epoch in tsv form") {
  const ToyEnv env = make_toy_env(8, 30, 12, 5);
  Model model = build_model(toy_config(ModelKind::kOurs), 1, env.records, env.table);
  Rmsprop opt;
  TrainConfig cfg;
  cfg.epochs = 3;
  cfg.batch_size = 4;
  cfg.seed = 9;
  std::ostringstream log;
  const auto logs = train(model, env.records, env.table, env.tag_names, cfg, opt, &log);

  REQUIRE(logs.size() == 3);
  std::istringstream lines(log.str());
  std::string line;
  std::size_t n = 0;
  while (std::getline(lines, line)) {
    REQUIRE(line == std::to_string(logs[n].epoch) + "\t" + format_loss(logs[n].loss) + "\t" +
                        std::to_string(logs[n].wallclock_ms));
    REQUIRE(logs[n].epoch == n + 1);
    REQUIRE(std::isfinite(logs[n].loss));
    REQUIRE(logs[n].loss > 0.0);
    ++n;
  }
  REQUIRE(n == 3);
}

TEST_CASE("training is deterministic in the seed") {
  const ToyEnv env = make_toy_env(8, 30, 12, 5);
  const auto run = [&](std::uint64_t seed) {
    Model model = build_model(toy_config(ModelKind::kOurs), 1, env.records, env.table);
    Rmsprop opt;
    TrainConfig cfg;
    cfg.epochs = 4;
    cfg.batch_size = 5;
    cfg.seed = seed;
    const auto logs = train(model, env.records, env.table, env.tag_names, cfg, opt);
    std::vector<double> losses;
    for (const auto& l : logs) losses.push_back(l.loss);
    return std::make_pair(losses, snapshot(model));
  };
  const auto a = run(9);
  const auto b = run(9);
  REQUIRE(a.first == b.first);
  REQUIRE(a.second == b.second);
  const auto c = run(10);
  REQUIRE(a.first != c.first);
}

TEST_CASE("a resumed run reproduces the straight-through run exactly") {
  const ToyEnv env = make_toy_env(8, 30, 12, 5);

  Model straight = build_model(toy_config(ModelKind::kOurs), 1, env.records, env.table);
  Rmsprop opt_a;
  TrainConfig cfg;
  cfg.epochs = 6;
  cfg.batch_size = 5;
  cfg.seed = 3;
  const auto logs_a = train(straight, env.records, env.table, env.tag_names, cfg, opt_a);

  Model resumed = build_model(toy_config(ModelKind::kOurs), 1, env.records, env.table);
  Rmsprop opt_b;
  TrainConfig first_half = cfg;
  first_half.epochs = 3;
  const auto logs_b1 = train(resumed, env.records, env.table, env.tag_names, first_half, opt_b);
  TrainConfig second_half = cfg;
  second_half.epochs = 3;
  second_half.start_epoch = 3;
  const auto logs_b2 = train(resumed, env.records, env.table, env.tag_names, second_half, opt_b);

  REQUIRE(snapshot(straight) == snapshot(resumed));
  REQUIRE(logs_b1.size() + logs_b2.size() == logs_a.size());
  for (std::size_t i = 0; i < 3; ++i) {
    REQUIRE(logs_a[i].loss == logs_b1[i].loss);
    REQUIRE(logs_a[3 + i].loss == logs_b2[i].loss);
    REQUIRE(logs_b2[i].epoch == 4 + i);
  }
}

TEST_CASE("zero learning rate leaves the parameters untouched") {
  const ToyEnv env = make_toy_env(8, 30, 12, 5);
  Model model = build_model(toy_config(ModelKind::kOurs), 1, env.records, env.table);
  const auto before = snapshot(model);
  Rmsprop opt({0.0, 0.9, 1e-8});
  TrainConfig cfg;
  cfg.epochs = 2;
  cfg.batch_size = 6;
  train(model, env.records, env.table, env.tag_names, cfg, opt);
  REQUIRE(snapshot(model) == before);
}

TEST_CASE("training drives the single-sample mse loss down") {
  const ToyEnv env = make_toy_env(8, 30, 12, 5);
  const std::vector<TripletRecord> one = {env.records[0]};
  Model model = build_model(toy_config(ModelKind::kOurs), 1, one, env.table);
  Rmsprop opt({0.01, 0.9, 1e-8});
  TrainConfig cfg;
  cfg.epochs = 120;
  cfg.batch_size = 1;
  cfg.seed = 4;
  const auto logs = train(model, one, env.table, env.tag_names, cfg, opt);
  REQUIRE(logs.back().loss < 0.5 * logs.front().loss);
}

TEST_CASE("every trainable kind runs a few epochs") {
  const ToyEnv env = make_toy_env(8, 30, 12, 5);
  for (ModelKind kind : {ModelKind::kOurs, ModelKind::kOursAttention, ModelKind::kOursMood,
                         ModelKind::kBow, ModelKind::kConse, ModelKind::kAttReader}) {
    Model model = build_model(toy_config(kind), 1, env.records, env.table);
    Rmsprop opt;
    TrainConfig cfg;
    cfg.epochs = 2;
    cfg.batch_size = 4;
    cfg.loss = kind == ModelKind::kAttReader ? LossKind::kMrl : LossKind::kMse;
    const auto logs = train(model, env.records, env.table, env.tag_names, cfg, opt);
    INFO(to_string(kind));
    REQUIRE(logs.size() == 2);
    REQUIRE(std::isfinite(logs.back().loss));
  }
}

TEST_CASE("train validates its configuration") {
  const ToyEnv env = make_toy_env(8, 30, 12, 5);
  Model model = build_model(toy_config(ModelKind::kOurs), 1, env.records, env.table);
  Rmsprop opt;
  TrainConfig cfg;

  REQUIRE_THROWS_AS(train(model, {}, env.table, env.tag_names, cfg, opt), ParameterError);

  cfg.batch_size = 0;
  REQUIRE_THROWS_AS(train(model, env.records, env.table, env.tag_names, cfg, opt),
                    ParameterError);
  cfg.batch_size = 4;

  // mrl needs at least two distinct songs
  cfg.loss = LossKind::kMrl;
  std::vector<TripletRecord> one_song;
  for (auto rec : env.records) {
    rec.song_id = "only";
    one_song.push_back(rec);
  }
  REQUIRE_THROWS_AS(train(model, one_song, env.table, env.tag_names, cfg, opt), ParameterError);
  cfg.loss = LossKind::kMse;

  // attreader accepts mrl only
  Model reader = build_model(toy_config(ModelKind::kAttReader), 1, env.records, env.table);
  REQUIRE_THROWS_AS(train(reader, env.records, env.table, env.tag_names, cfg, opt), ConfigError);

  // a decoupled output dimension cannot be trained against the tag group
  ModelConfig odd = toy_config(ModelKind::kOurs);
  odd.output_dim = 10;
  Model mismatched = build_model(odd, 1, env.records, env.table);
  REQUIRE_THROWS_AS(train(mismatched, env.records, env.table, env.tag_names, cfg, opt),
                    ConfigError);
}

TEST_CASE("library-level gradient check harness agrees") {
  const GradCheckReport r = check_model_gradients(ModelKind::kOurs, LossKind::kMse, 1);
  REQUIRE(r.pass());
  REQUIRE(r.worst < 1e-4);
  const GradCheckReport bad =
      check_model_gradients(ModelKind::kOurs, LossKind::kMse, 1, /*corrupt=*/true);
  REQUIRE_FALSE(bad.pass());
}
