#include <catch2/catch_amalgamated.hpp>

#include <set>
#include <string>
#include <vector>

#include "tagsong/model_check.hpp"
#include "tagsong/retrieval.hpp"

using namespace tagsong;
using Catch::Matchers::WithinAbs;

namespace {

// A query whose single relevant candidate sits at the given 1-based rank.
RankingResult fake_rank(std::size_t n, std::size_t relevant_rank) {
  RankingResult r;
  r.query_id = "q";
  for (std::size_t i = 0; i < n; ++i) {
    r.candidate_ids.push_back("c" + std::to_string(i));
    r.similarities.push_back(static_cast<double>(n - i));
    r.relevant.push_back(i + 1 == relevant_rank);
  }
  return r;
}

std::vector<RankingResult> fixture_ranks(const std::vector<std::size_t>& ranks,
                                         std::size_t gallery = 20) {
  std::vector<RankingResult> out;
  for (std::size_t r : ranks) out.push_back(fake_rank(gallery, r));
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

// Rank of candidate j under stable descending order, computed without sorting.
std::size_t brute_rank(const std::vector<double>& scores, std::size_t j) {
  std::size_t rank = 1;
  for (std::size_t l = 0; l < scores.size(); ++l) {
    if (scores[l] > scores[j] || (scores[l] == scores[j] && l < j)) ++rank;
  }
  return rank;
}

}  // namespace

TEST_CASE("rank_scores orders by similarity with stable ties") {
  const std::vector<std::string> ids = {"a", "b", "c", "d"};
  const std::vector<double> scores = {0.1, 0.9, 0.9, 0.5};
  const RankingResult r = rank_scores("q", ids, scores, {"d"});
  REQUIRE(r.candidate_ids == std::vector<std::string>({"b", "c", "d", "a"}));
  REQUIRE(r.similarities == std::vector<double>({0.9, 0.9, 0.5, 0.1}));
  REQUIRE(best_relevant_rank(r) == 3);

  // All-equal scores keep the gallery order untouched.
  const RankingResult flat = rank_scores("q", ids, {0.5, 0.5, 0.5, 0.5}, {"a"});
  REQUIRE(flat.candidate_ids == ids);

  REQUIRE_THROWS_AS(rank_scores("q", {}, {}, {}), ParameterError);
  REQUIRE_THROWS_AS(rank_scores("q", ids, {0.1}, {"a"}), ShapeError);
  REQUIRE_THROWS_AS(rank_scores("q", ids, scores, {"zzz"}), ParameterError);
}

TEST_CASE("rank_scores full ordering on twenty items") {
  std::vector<std::string> ids;
  std::vector<double> scores;
  for (std::size_t i = 0; i < 20; ++i) {
    ids.push_back("g" + std::to_string(i));
    scores.push_back(static_cast<double>((i * 7) % 20));  // a permutation of 0..19
  }
  const RankingResult r = rank_scores("q", ids, scores, {ids[0]});
  for (std::size_t i = 0; i + 1 < 20; ++i) REQUIRE(r.similarities[i] > r.similarities[i + 1]);
  REQUIRE(r.similarities.front() == 19.0);
  REQUIRE(r.similarities.back() == 0.0);
  // score of g0 is 0 -> last place
  REQUIRE(best_relevant_rank(r) == 20);
}

TEST_CASE("rank_candidates ranks the query itself first") {
  std::vector<std::pair<std::string, Matrix>> gallery = {
      {"self", colvec({1.0, 0.0, 0.0})},
      {"near", colvec({0.9, 0.4, 0.0})},
      {"far", colvec({0.0, 0.0, 1.0})},
  };
  const RankingResult r = rank_candidates("q", colvec({2.0, 0.0, 0.0}), gallery, {"self"});
  REQUIRE(r.candidate_ids[0] == "self");
  REQUIRE_THAT(r.similarities[0], WithinAbs(1.0, 1e-12));
  REQUIRE(best_relevant_rank(r) == 1);
  REQUIRE(r.candidate_ids[2] == "far");

  // Candidate norms cancel out of the cosine.
  for (auto& [id, vec] : gallery) vec = scaled(vec, 5.0);
  REQUIRE(rank_candidates("q", colvec({2.0, 0.0, 0.0}), gallery, {"self"}).candidate_ids ==
          r.candidate_ids);

  gallery[1].second = Matrix(3, 1);
  REQUIRE_THROWS_AS(rank_candidates("q", colvec({1.0, 0.0, 0.0}), gallery, {"self"}),
                    NumericError);
}

TEST_CASE("recall_at_k on a hand-built fixture") {
  const auto results = fixture_ranks({1, 3, 7, 12});
  REQUIRE(recall_at_k(results, 1) == 25.0);
  REQUIRE(recall_at_k(results, 3) == 50.0);
  REQUIRE(recall_at_k(results, 5) == 50.0);
  REQUIRE(recall_at_k(results, 10) == 75.0);
  REQUIRE(recall_at_k(results, 12) == 100.0);
  REQUIRE(recall_at_k(results, 500) == 100.0);  // k beyond the gallery

  double prev = 0.0;
  for (std::size_t k = 1; k <= 20; ++k) {
    const double cur = recall_at_k(results, k);
    REQUIRE(cur >= prev);
    prev = cur;
  }

  REQUIRE_THROWS_AS(recall_at_k(results, 0), ParameterError);
  REQUIRE_THROWS_AS(recall_at_k({}, 1), ParameterError);
}

TEST_CASE("median_rank averages the middle pair on even counts") {
  REQUIRE(median_rank(fixture_ranks({2, 1, 3})) == 2.0);
  REQUIRE(median_rank(fixture_ranks({10, 3, 1, 2})) == 2.5);
  REQUIRE(median_rank(fixture_ranks({7})) == 7.0);
  REQUIRE(median_rank(fixture_ranks({5, 5, 5, 5})) == 5.0);
  REQUIRE_THROWS_AS(median_rank({}), ParameterError);

  RankingResult no_rel = fake_rank(3, 1);
  no_rel.relevant[0] = false;
  REQUIRE_THROWS_AS(median_rank({no_rel}), ParameterError);
}

TEST_CASE("metrics agree with a brute-force reference on random score matrices") {
  Rng rng(123);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t Q = 1 + rng.next_below(20);
    const std::size_t S = 1 + rng.next_below(20);
    std::vector<std::vector<double>> score(Q, std::vector<double>(S));
    for (auto& row : score)
      for (auto& v : row) v = rng.next_below(8) / 4.0;  // coarse values force ties

    std::vector<std::string> ids;
    for (std::size_t s = 0; s < S; ++s) ids.push_back("s" + std::to_string(s));

    std::vector<RankingResult> results;
    std::vector<std::size_t> expected_ranks;
    for (std::size_t q = 0; q < Q; ++q) {
      const std::size_t rel = q % S;
      results.push_back(rank_scores("q" + std::to_string(q), ids, score[q], {ids[rel]}));
      expected_ranks.push_back(brute_rank(score[q], rel));
    }

    for (std::size_t q = 0; q < Q; ++q) {
      REQUIRE(best_relevant_rank(results[q]) == expected_ranks[q]);
    }
    for (std::size_t k : {std::size_t{1}, std::size_t{3}, std::size_t{10}}) {
      std::size_t hits = 0;
      for (std::size_t r : expected_ranks) hits += r <= k ? 1 : 0;
      const double expect = 100.0 * static_cast<double>(hits) / static_cast<double>(Q);
      REQUIRE_THAT(recall_at_k(results, k), WithinAbs(expect, 1e-12));
    }
    std::vector<std::size_t> sorted = expected_ranks;
    std::sort(sorted.begin(), sorted.end());
    const double expect_med =
        sorted.size() % 2 == 1
            ? static_cast<double>(sorted[sorted.size() / 2])
            : (static_cast<double>(sorted[sorted.size() / 2 - 1]) +
               static_cast<double>(sorted[sorted.size() / 2])) /
                  2.0;
    REQUIRE(median_rank(results) == expect_med);
  }
}

TEST_CASE("a perfect similarity model retrieves at rank one") {
  std::vector<std::pair<std::string, Matrix>> gallery;
  for (std::size_t i = 0; i < 6; ++i) {
    Matrix v(6, 1);
    v[i] = 1.0;
    gallery.emplace_back("item" + std::to_string(i), v);
  }
  std::vector<RankingResult> results;
  for (std::size_t i = 0; i < 6; ++i) {
    Matrix q(6, 1);
    q[i] = 0.5;
    results.push_back(rank_candidates("q" + std::to_string(i), q, gallery,
                                      {"item" + std::to_string(i)}));
  }
  REQUIRE(recall_at_k(results, 1) == 100.0);
  REQUIRE(median_rank(results) == 1.0);
}

TEST_CASE("recall k schedule tracks the split mode") {
  REQUIRE(recall_ks(SplitMode::kDagger) == std::vector<std::size_t>({1, 5, 10}));
  REQUIRE(recall_ks(SplitMode::kSection) == std::vector<std::size_t>({10, 50, 100}));
}

TEST_CASE("direction parser round trips") {
  REQUIRE(parse_direction("image2song") == Direction::kImage2Song);
  REQUIRE(parse_direction("song2image") == Direction::kSong2Image);
  REQUIRE(to_string(Direction::kSong2Image) == "song2image");
  REQUIRE_THROWS_AS(parse_direction("both"), ConfigError);
}

TEST_CASE("evaluate produces a complete report for every model kind") {
  const ToyEnv env = make_toy_env(8, 30, 12, 5);
  for (ModelKind kind : {ModelKind::kOurs, ModelKind::kOursAttention, ModelKind::kOursMood,
                         ModelKind::kBow, ModelKind::kConse, ModelKind::kAttReader}) {
    const Model model = build_model(toy_config(kind), 2, env.records, env.table);
    const MetricsReport rep = evaluate(model, env.table, env.tag_names, env.records,
                                       SplitMode::kDagger, Direction::kImage2Song);
    INFO(to_string(kind));
    REQUIRE(rep.model == to_string(kind));
    REQUIRE(rep.num_queries == 12);
    REQUIRE(rep.gallery_size == 6);  // toy records cover six songs
    REQUIRE(rep.recall.size() == 3);
    REQUIRE(rep.recall[0].first == 1);
    for (const auto& [k, pct] : rep.recall) {
      REQUIRE(pct >= 0.0);
      REQUIRE(pct <= 100.0);
    }
    REQUIRE(rep.med_r >= 1.0);
    REQUIRE(rep.med_r <= 6.0);

    // Deterministic: a second pass reproduces the numbers exactly.
    const MetricsReport again = evaluate(model, env.table, env.tag_names, env.records,
                                         SplitMode::kDagger, Direction::kImage2Song);
    REQUIRE(again.recall == rep.recall);
    REQUIRE(again.med_r == rep.med_r);
  }
}

TEST_CASE("evaluate song2image swaps queries and gallery") {
  const ToyEnv env = make_toy_env(8, 30, 12, 5);
  const Model model = build_model(toy_config(ModelKind::kOurs), 2, env.records, env.table);
  const MetricsReport rep = evaluate(model, env.table, env.tag_names, env.records,
                                     SplitMode::kSection, Direction::kSong2Image);
  REQUIRE(rep.direction == Direction::kSong2Image);
  REQUIRE(rep.num_queries == 6);
  REQUIRE(rep.gallery_size == 12);
  REQUIRE(rep.recall[0].first == 10);  // section mode k-schedule
  REQUIRE(rep.med_r >= 1.0);
}

TEST_CASE("evaluate validates its inputs") {
  const ToyEnv env = make_toy_env(8, 30, 12, 5);
  const Model model = build_model(toy_config(ModelKind::kOurs), 2, env.records, env.table);
  REQUIRE_THROWS_AS(evaluate(model, env.table, env.tag_names, {}, SplitMode::kDagger,
                             Direction::kImage2Song),
                    ParameterError);

  ModelConfig odd = toy_config(ModelKind::kOurs);
  odd.output_dim = 10;
  const Model mismatched = build_model(odd, 2, env.records, env.table);
  REQUIRE_THROWS_AS(evaluate(mismatched, env.table, env.tag_names, env.records,
                             SplitMode::kDagger, Direction::kImage2Song),
                    ConfigError);
}
