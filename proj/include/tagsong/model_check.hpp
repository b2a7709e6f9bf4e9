#pragma once

#include <functional>
#include <string>
#include <vector>

#include "tagsong/baselines.hpp"
#include "tagsong/gradcheck.hpp"
#include "tagsong/losses.hpp"
#include "tagsong/model.hpp"

namespace tagsong {

// A self-contained synthetic environment for exercising every model kind:
// a small random embedding table, 515 tag names drawn from that vocabulary
// (so the tag attention vector is non-zero), and a handful of records.
struct ToyEnv {
  EmbeddingTable table;
  std::vector<std::string> tag_names;
  std::vector<TripletRecord> records;
};

inline ToyEnv make_toy_env(std::size_t embed_dim, std::size_t vocab_size,
                           std::size_t n_records, std::uint64_t seed) {
  if (vocab_size < 4) throw ParameterError("make_toy_env: vocab too small");
  ToyEnv env;
  env.table = EmbeddingTable(embed_dim);
  Rng rng(seed);
  std::vector<std::string> words;
  for (std::size_t i = 0; i < vocab_size; ++i) {
    const std::string w = "w" + std::to_string(i);
    std::vector<double> row(embed_dim);
    for (double& v : row) v = rng.next_uniform(-1.0, 1.0);
    env.table.add(w, row);
    words.push_back(w);
  }
  for (std::size_t i = 0; i < kTagDim; ++i) {
    // every other name is two-word to exercise the multi-word embedding path
    std::string name = words[i % vocab_size];
    if (i % 2 == 1) name += " " + words[(i + 3) % vocab_size];
    env.tag_names.push_back(name);
  }
  const std::vector<std::string> moods = {"happy", "sad", "calm"};
  for (std::size_t r = 0; r < n_records; ++r) {
    TripletRecord rec;
    rec.id = "img" + std::to_string(100 + r);
    rec.song_id = "song" + std::to_string(r % std::max<std::size_t>(2, n_records / 2));
    const std::size_t len = 3 + rng.next_below(4);  // 3..6 words
    std::string lyric;
    for (std::size_t t = 0; t < len; ++t) {
      if (t) lyric += " ";
      lyric += words[rng.next_below(vocab_size)];
    }
    rec.lyric = lyric;
    rec.tags.resize(kTagDim);
    for (auto& v : rec.tags) v = rng.next_unit();
    if (r % 3 != 2) rec.mood = moods[r % moods.size()];
    rec.favorite_count = 1 + static_cast<std::int64_t>(rng.next_below(100));
    env.records.push_back(std::move(rec));
  }
  return env;
}

struct GradCheckBlock {
  std::string name;
  double max_rel_err = 0.0;
};

struct GradCheckReport {
  ModelKind kind = ModelKind::kOurs;
  LossKind loss = LossKind::kMse;
  std::uint64_t seed = 0;
  std::vector<GradCheckBlock> blocks;
  double worst = 0.0;

  bool pass(double tol = 1e-4) const { return worst < tol; }
};

// Compares the analytic gradient of one training term against central finite
// differences, parameter block by parameter block, on a toy-sized model.
// `corrupt` deliberately damages one analytic entry (negative-control hook).
inline GradCheckReport check_model_gradients(ModelKind kind, LossKind loss, std::uint64_t seed,
                                             bool corrupt = false, double fd_step = 1e-5) {
  ToyEnv env = make_toy_env(/*embed_dim=*/8, /*vocab_size=*/12, /*n_records=*/6, seed);
  ModelConfig cfg;
  cfg.kind = kind;
  cfg.hidden_dim = 4;
  cfg.attn_dim = 4;
  cfg.k_tags = 3;
  cfg.mlp_hidden = {5};
  cfg.combiner_hidden = {4};
  cfg.embedding_dim = 8;
  cfg.max_len = 6;
  cfg.bow_vocab_cap = 50;
  cfg.output_dim = 10;
  if (kind == ModelKind::kAttReader) loss = LossKind::kMrl;

  Model model = build_model(cfg, seed, env.records, env.table);
  const TripletRecord& pos = env.records[0];
  const TripletRecord* neg = nullptr;
  for (const auto& rec : env.records) {
    if (rec.song_id != pos.song_id) {
      neg = &rec;
      break;
    }
  }
  const LyricInput pos_lyric = prepare_lyric(pos.lyric, env.table, cfg.max_len);
  const LyricInput neg_lyric = prepare_lyric(neg->lyric, env.table, cfg.max_len);

  Rng trng(seed ^ 0xABCDEF);
  Matrix target(cfg.output_dim, 1);
  for (std::size_t i = 0; i < target.size(); ++i) target[i] = 0.1 + 0.8 * trng.next_unit();

  // flatten parameters
  std::vector<std::string> names;
  std::vector<Matrix*> params;
  std::vector<std::size_t> offsets;
  std::size_t total = 0;
  for_each_model_param(model, [&](const std::string& name, Matrix& m) {
    names.push_back(name);
    params.push_back(&m);
    offsets.push_back(total);
    total += m.size();
  });
  Matrix theta0(total, 1);
  for (std::size_t b = 0; b < params.size(); ++b) {
    for (std::size_t i = 0; i < params[b]->size(); ++i) theta0[offsets[b] + i] = (*params[b])[i];
  }
  auto scatter = [&](const Matrix& theta) {
    for (std::size_t b = 0; b < params.size(); ++b) {
      for (std::size_t i = 0; i < params[b]->size(); ++i) {
        (*params[b])[i] = theta[offsets[b] + i];
      }
    }
  };

  auto loss_value = [&]() -> double {
    if (kind == ModelKind::kAttReader) {
      Matrix vtilde = model_tag_attention(model, pos.tags, env.table, env.tag_names);
      const double s_pos = attreader_score(model.attreader, target, pos_lyric.embedded, vtilde);
      const double s_neg = attreader_score(model.attreader, target, neg_lyric.embedded, vtilde);
      const double raw = 1.0 + s_neg - s_pos;
      return raw > 0.0 ? raw : 0.0;
    }
    Matrix pred = model_forward(model, pos_lyric, pos.tags, pos.mood, env.table, env.tag_names);
    switch (loss) {
      case LossKind::kMse: return mse_loss(pred, target).value;
      case LossKind::kCpl: return cosine_loss(pred, target).value;
      case LossKind::kMrl: {
        Matrix neg_pred =
            model_forward(model, neg_lyric, pos.tags, neg->mood, env.table, env.tag_names);
        return margin_loss(pred, neg_pred, target).value;
      }
    }
    return 0.0;
  };

  // analytic gradient at theta0
  scatter(theta0);
  Model grads = zeros_like(model);
  if (kind == ModelKind::kAttReader) {
    Matrix vtilde = model_tag_attention(model, pos.tags, env.table, env.tag_names);
    AttReaderScoreCache cp, cn;
    const double s_pos =
        attreader_score(model.attreader, target, pos_lyric.embedded, vtilde, &cp);
    const double s_neg =
        attreader_score(model.attreader, target, neg_lyric.embedded, vtilde, &cn);
    if (1.0 + s_neg - s_pos > 0.0) {
      attreader_backward(model.attreader, cp, -1.0, grads.attreader);
      attreader_backward(model.attreader, cn, +1.0, grads.attreader);
    }
  } else if (loss == LossKind::kMrl) {
    ModelCache cp, cn;
    Matrix pred =
        model_forward(model, pos_lyric, pos.tags, pos.mood, env.table, env.tag_names, &cp);
    Matrix neg_pred =
        model_forward(model, neg_lyric, pos.tags, neg->mood, env.table, env.tag_names, &cn);
    MarginLossResult ml = margin_loss(pred, neg_pred, target);
    if (ml.value > 0.0) {
      model_backward(model, cp, ml.d_positive, grads);
      model_backward(model, cn, ml.d_negative, grads);
    }
  } else {
    ModelCache cache;
    Matrix pred =
        model_forward(model, pos_lyric, pos.tags, pos.mood, env.table, env.tag_names, &cache);
    LossResult lr = loss == LossKind::kMse ? mse_loss(pred, target) : cosine_loss(pred, target);
    model_backward(model, cache, lr.d_prediction, grads);
  }
  Matrix analytic(total, 1);
  {
    std::size_t b = 0;
    for_each_model_param(grads, [&](const std::string&, Matrix& m) {
      for (std::size_t i = 0; i < m.size(); ++i) analytic[offsets[b] + i] = m[i];
      ++b;
    });
  }
  if (corrupt && total > 0) analytic[total / 2] += 0.5;

  Matrix fd = finite_diff_grad(
      [&](const Matrix& theta) {
        scatter(theta);
        return loss_value();
      },
      theta0, fd_step);
  scatter(theta0);

  GradCheckReport report;
  report.kind = kind;
  report.loss = kind == ModelKind::kAttReader ? LossKind::kMrl : loss;
  report.seed = seed;
  for (std::size_t b = 0; b < params.size(); ++b) {
    const std::size_t begin = offsets[b];
    const std::size_t end = begin + params[b]->size();
    GradCheckBlock block;
    block.name = names[b];
    block.max_rel_err =
        max_relative_error(slice(analytic, begin, end), slice(fd, begin, end));
    report.worst = std::max(report.worst, block.max_rel_err);
    report.blocks.push_back(std::move(block));
  }
  return report;
}

}  // namespace tagsong
