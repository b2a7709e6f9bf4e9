#pragma once

#include <chrono>
#include <cstdio>
#include <ostream>
#include <string>
#include <vector>

#include "tagsong/losses.hpp"
#include "tagsong/model.hpp"
#include "tagsong/rmsprop.hpp"

namespace tagsong {

struct TrainConfig {
  LossKind loss = LossKind::kMse;
  std::size_t batch_size = 100;
  std::size_t epochs = 1;
  std::uint64_t seed = 0;
  double learning_rate = 0.001;
  double rho = 0.9;
  double eps = 1e-8;
  double clip_norm = 5.0;  // global-norm clip; 0 disables
  double margin = 1.0;
  std::size_t start_epoch = 0;  // nonzero when resuming
};

struct EpochLog {
  std::size_t epoch = 0;  // 1-based
  double loss = 0.0;
  std::int64_t wallclock_ms = 0;
};

// Every epoch reshuffles and resamples negatives from a stream derived from
// the config seed and the absolute epoch number, so a resumed run continues
// the exact sequence a straight-through run would have produced.
inline std::uint64_t epoch_seed(std::uint64_t seed, std::size_t epoch) {
  return seed ^ (0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(epoch + 1));
}

inline std::string format_loss(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

namespace detail {

struct ParamRefs {
  std::vector<std::string> names;
  std::vector<Matrix*> params;
};

inline ParamRefs collect_params(Model& m) {
  ParamRefs r;
  for_each_model_param(m, [&](const std::string& name, Matrix& mat) {
    r.names.push_back(name);
    r.params.push_back(&mat);
  });
  return r;
}

}  // namespace detail

// Mini-batch training over (image, lyric) pairs: the batch loss is the sum
// of the per-pair terms, gradients are accumulated across the batch, and a
// single optimizer update is applied per batch. The last partial batch is
// used. Returns one log entry per epoch.
inline std::vector<EpochLog> train(Model& model, const std::vector<TripletRecord>& records,
                                   const EmbeddingTable& table,
                                   const std::vector<std::string>& tag_names,
                                   const TrainConfig& cfg, Rmsprop& opt,
                                   std::ostream* log_stream = nullptr) {
  if (records.empty()) throw ParameterError("train: no records");
  if (cfg.batch_size == 0) throw ParameterError("train: batch_size must be >= 1");
  if (model.pair_scored() && cfg.loss != LossKind::kMrl) {
    throw ConfigError("train: the pair-scored attreader supports only the mrl loss");
  }
  if (model.output_dim() != tag_group_dim(model.config.tag_group)) {
    throw ConfigError("train: model output dim does not match its tag group");
  }
  const TagGroup group = model.config.tag_group;

  std::vector<LyricInput> inputs;
  inputs.reserve(records.size());
  for (const auto& rec : records) {
    inputs.push_back(prepare_lyric(rec.lyric, table, model.config.max_len));
  }

  if (cfg.loss == LossKind::kMrl) {
    bool two_songs = false;
    for (std::size_t i = 1; i < records.size() && !two_songs; ++i) {
      two_songs = records[i].song_id != records[0].song_id;
    }
    if (!two_songs) throw ParameterError("train: mrl needs records from at least two songs");
  }

  Rmsprop* optimizer = &opt;
  detail::ParamRefs refs = detail::collect_params(model);

  std::vector<EpochLog> logs;
  std::vector<std::size_t> order(records.size());

  for (std::size_t e = 0; e < cfg.epochs; ++e) {
    const std::size_t epoch = cfg.start_epoch + e + 1;
    const auto t0 = std::chrono::steady_clock::now();
    Rng rng(epoch_seed(cfg.seed, cfg.start_epoch + e));
    // The order is re-derived from scratch so that epoch k of a resumed run
    // shuffles exactly like epoch k of a straight-through run.
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    double epoch_loss = 0.0;

    for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch_size) {
      const std::size_t end = std::min(begin + cfg.batch_size, order.size());
      const std::size_t batch_index = begin / cfg.batch_size;
      try {
        Model grads = zeros_like(model);
        double batch_loss = 0.0;
        for (std::size_t bi = begin; bi < end; ++bi) {
          const std::size_t idx = order[bi];
          const TripletRecord& rec = records[idx];
          const Matrix v = mask_tags(rec.tags, group);
          if (model.pair_scored()) {
            std::size_t neg = idx;
            while (records[neg].song_id == rec.song_id) neg = rng.next_below(records.size());
            Matrix vtilde = model_tag_attention(model, rec.tags, table, tag_names);
            AttReaderScoreCache cp, cn;
            const double s_pos =
                attreader_score(model.attreader, v, inputs[idx].embedded, vtilde, &cp);
            const double s_neg =
                attreader_score(model.attreader, v, inputs[neg].embedded, vtilde, &cn);
            const double raw = cfg.margin + s_neg - s_pos;
            if (raw > 0.0) {
              batch_loss += raw;
              attreader_backward(model.attreader, cp, -1.0, grads.attreader);
              attreader_backward(model.attreader, cn, +1.0, grads.attreader);
            }
          } else if (cfg.loss == LossKind::kMrl) {
            std::size_t neg = idx;
            while (records[neg].song_id == rec.song_id) neg = rng.next_below(records.size());
            ModelCache cp, cn;
            Matrix pos_pred =
                model_forward(model, inputs[idx], rec.tags, rec.mood, table, tag_names, &cp);
            Matrix neg_pred = model_forward(model, inputs[neg], rec.tags, records[neg].mood,
                                            table, tag_names, &cn);
            MarginLossResult ml = margin_loss(pos_pred, neg_pred, v, cfg.margin);
            if (ml.value > 0.0) {
              batch_loss += ml.value;
              model_backward(model, cp, ml.d_positive, grads);
              model_backward(model, cn, ml.d_negative, grads);
            }
          } else {
            ModelCache cache;
            Matrix pred =
                model_forward(model, inputs[idx], rec.tags, rec.mood, table, tag_names, &cache);
            LossResult lr =
                cfg.loss == LossKind::kMse ? mse_loss(pred, v) : cosine_loss(pred, v);
            batch_loss += lr.value;
            model_backward(model, cache, lr.d_prediction, grads);
          }
        }

        detail::ParamRefs grad_refs = detail::collect_params(grads);
        if (cfg.clip_norm > 0.0) {
          double sq = 0.0;
          for (Matrix* g : grad_refs.params) sq += squared_norm(*g);
          const double gn = std::sqrt(sq);
          if (gn > cfg.clip_norm) {
            const double scale = cfg.clip_norm / gn;
            for (Matrix* g : grad_refs.params) {
              for (std::size_t i = 0; i < g->size(); ++i) (*g)[i] *= scale;
            }
          }
        }
        for (std::size_t i = 0; i < refs.params.size(); ++i) {
          optimizer->step(refs.names[i], *refs.params[i], *grad_refs.params[i]);
        }
        epoch_loss += batch_loss;
      } catch (const NumericError& err) {
        throw NumericError("epoch " + std::to_string(epoch) + " batch " +
                           std::to_string(batch_index) + ": " + err.what());
      }
    }

    const auto t1 = std::chrono::steady_clock::now();
    EpochLog log;
    log.epoch = epoch;
    log.loss = epoch_loss;
    log.wallclock_ms =
        std::chrono::duration_cast<std::chrono::milliseconds>(t1 - t0).count();
    if (log_stream) {
      (*log_stream) << log.epoch << '\t' << format_loss(log.loss) << '\t' << log.wallclock_ms
                    << '\n';
    }
    logs.push_back(log);
  }
  return logs;
}

}  // namespace tagsong
