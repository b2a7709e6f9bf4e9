#pragma once

#include <algorithm>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "tagsong/baselines.hpp"
#include "tagsong/dataset.hpp"
#include "tagsong/encoder.hpp"
#include "tagsong/errors.hpp"
#include "tagsong/rng.hpp"
#include "tagsong/text.hpp"

namespace tagsong {

enum class ModelKind { kOurs, kOursAttention, kOursMood, kBow, kConse, kAttReader };

inline std::string to_string(ModelKind k) {
  switch (k) {
    case ModelKind::kOurs: return "ours";
    case ModelKind::kOursAttention: return "ours-attention";
    case ModelKind::kOursMood: return "ours-mood";
    case ModelKind::kBow: return "bow";
    case ModelKind::kConse: return "conse";
    case ModelKind::kAttReader: return "attreader";
  }
  return "ours";
}

inline ModelKind parse_model_kind(const std::string& s) {
  if (s == "ours") return ModelKind::kOurs;
  if (s == "ours-attention") return ModelKind::kOursAttention;
  if (s == "ours-mood") return ModelKind::kOursMood;
  if (s == "bow") return ModelKind::kBow;
  if (s == "conse") return ModelKind::kConse;
  if (s == "attreader") return ModelKind::kAttReader;
  throw ConfigError("unknown model '" + s + "'");
}

struct ModelConfig {
  ModelKind kind = ModelKind::kOurs;
  std::size_t hidden_dim = 128;
  std::size_t attn_dim = 128;
  std::size_t k_tags = 5;
  Pooling pooling = Pooling::kAverage;
  TagGroup tag_group = TagGroup::kObjectAttribute;
  bool shared_attention = false;
  std::vector<std::size_t> mlp_hidden = {512};
  std::vector<std::size_t> combiner_hidden = {128};
  std::size_t embedding_dim = 300;
  std::size_t max_len = 500;
  std::size_t bow_vocab_cap = 5000;
  std::size_t output_dim = 0;  // 0 -> dimension of tag_group

  std::size_t resolved_output_dim() const {
    return output_dim ? output_dim : tag_group_dim(tag_group);
  }
};

// A lyric prepared for every model family: the stop-filtered word list keeps
// the bag-of-words path independent of the embedding vocabulary; `embedded`
// is empty (0 rows) when no word is in the embedding table.
struct LyricInput {
  std::vector<std::string> words;
  Matrix embedded;
};

inline LyricInput prepare_lyric(const std::string& raw, const EmbeddingTable& table,
                                std::size_t max_len,
                                const std::vector<std::string>& stop = default_stop_words()) {
  LyricInput in;
  in.words = preprocess_lyric(raw, stop);
  try {
    TokenSequence seq = tokens_to_embedding_ids(in.words, table, max_len);
    in.embedded = embed_tokens(seq, table);
  } catch (const EmptyLyricError&) {
    in.embedded = Matrix(0, table.dim());
  }
  return in;
}

struct Model {
  ModelConfig config;
  std::uint64_t init_seed = 0;
  EncoderParams encoder;               // ours / ours-attention / ours-mood
  MlpParams conse;                     // conse
  BowVocab bow_vocab;                  // bow
  MlpParams bow;                       // bow: single linear layer
  AttReaderParams attreader;           // attreader
  std::vector<std::string> mood_vocab; // sorted, train split only

  std::size_t output_dim() const { return config.resolved_output_dim(); }
  bool uses_tag_attention() const {
    return config.kind == ModelKind::kOursAttention || config.kind == ModelKind::kAttReader;
  }
  bool pair_scored() const { return config.kind == ModelKind::kAttReader; }

  int mood_row(const std::optional<std::string>& mood) const {
    if (!mood) return -1;
    const std::string key = normalize_mood(*mood);
    auto it = std::lower_bound(mood_vocab.begin(), mood_vocab.end(), key);
    if (it == mood_vocab.end() || *it != key) return -1;
    return static_cast<int>(it - mood_vocab.begin());
  }
};

// Builds the chosen model kind. Train records feed the bow vocabulary and
// the mood vocabulary; they are otherwise unused.
inline Model build_model(const ModelConfig& cfg, std::uint64_t seed,
                         const std::vector<TripletRecord>& train_records,
                         const EmbeddingTable& table,
                         const std::vector<std::string>& stop = default_stop_words()) {
  if (table.dim() != cfg.embedding_dim) {
    throw ConfigError("build_model: embedding table dim " + std::to_string(table.dim()) +
                      " != configured " + std::to_string(cfg.embedding_dim));
  }
  Model m;
  m.config = cfg;
  m.init_seed = seed;
  Rng rng(seed);
  const std::size_t D = cfg.resolved_output_dim();
  switch (cfg.kind) {
    case ModelKind::kOurs:
      m.encoder = init_encoder(cfg.embedding_dim, cfg.hidden_dim, D, cfg.mlp_hidden,
                               /*attention=*/false, 0, cfg.shared_attention,
                               /*mood=*/false, 0, rng);
      break;
    case ModelKind::kOursAttention:
      m.encoder = init_encoder(cfg.embedding_dim, cfg.hidden_dim, D, cfg.mlp_hidden,
                               /*attention=*/true, cfg.attn_dim, cfg.shared_attention,
                               /*mood=*/false, 0, rng);
      break;
    case ModelKind::kOursMood: {
      std::set<std::string> moods;
      for (const auto& rec : train_records) {
        if (rec.mood) moods.insert(normalize_mood(*rec.mood));
      }
      m.mood_vocab.assign(moods.begin(), moods.end());
      m.encoder = init_encoder(cfg.embedding_dim, cfg.hidden_dim, D, cfg.mlp_hidden,
                               /*attention=*/false, 0, cfg.shared_attention,
                               /*mood=*/true, m.mood_vocab.size(), rng);
      break;
    }
    case ModelKind::kBow: {
      std::vector<std::vector<std::string>> docs;
      std::set<std::string> seen_songs;
      for (const auto& rec : train_records) {
        if (!seen_songs.insert(rec.song_id).second) continue;  // one document per song
        docs.push_back(preprocess_lyric(rec.lyric, stop));
      }
      m.bow_vocab = build_bow_vocab(docs, cfg.bow_vocab_cap);
      m.bow = MlpParams::create({m.bow_vocab.size(), D}, /*linear_output=*/true, rng);
      break;
    }
    case ModelKind::kConse: {
      std::vector<std::size_t> dims;
      dims.push_back(cfg.embedding_dim);
      for (std::size_t h : cfg.mlp_hidden) dims.push_back(h);
      dims.push_back(D);
      m.conse = MlpParams::create(dims, /*linear_output=*/false, rng);
      break;
    }
    case ModelKind::kAttReader:
      m.attreader = AttReaderParams::create(cfg.embedding_dim, cfg.hidden_dim, cfg.attn_dim, D,
                                            cfg.combiner_hidden, rng);
      break;
  }
  return m;
}

inline Model zeros_like(const Model& o) {
  Model m;
  m.config = o.config;
  m.init_seed = o.init_seed;
  m.mood_vocab = o.mood_vocab;
  switch (o.config.kind) {
    case ModelKind::kOurs:
    case ModelKind::kOursAttention:
    case ModelKind::kOursMood:
      m.encoder = zeros_like(o.encoder);
      break;
    case ModelKind::kBow:
      m.bow_vocab = o.bow_vocab;
      m.bow = MlpParams::zeros_like(o.bow);
      break;
    case ModelKind::kConse:
      m.conse = MlpParams::zeros_like(o.conse);
      break;
    case ModelKind::kAttReader:
      m.attreader = AttReaderParams::zeros_like(o.attreader);
      break;
  }
  return m;
}

template <typename M, typename F>
void for_each_model_param(M& m, F&& f) {
  switch (m.config.kind) {
    case ModelKind::kOurs:
    case ModelKind::kOursAttention:
    case ModelKind::kOursMood:
      for_each_encoder_param(m.encoder, f);
      break;
    case ModelKind::kBow:
      for_each_mlp_param(m.bow, "bow", f);
      break;
    case ModelKind::kConse:
      for_each_mlp_param(m.conse, "conse", f);
      break;
    case ModelKind::kAttReader:
      for_each_attreader_param(m.attreader, f);
      break;
  }
}

struct ModelCache {
  ForwardCache enc;  // ours family
  MlpCache mlp;      // conse / bow head
  Matrix mlp_in;     // pooled embedding or tf-idf features
};

// Projects a lyric into tag space. Image tags condition the attention kinds;
// the other kinds ignore them. Not valid for the pair-scored attreader.
inline Matrix model_forward(const Model& m, const LyricInput& lyric,
                            const std::vector<double>& image_tags,
                            const std::optional<std::string>& mood, const EmbeddingTable& table,
                            const std::vector<std::string>& tag_names,
                            ModelCache* cache = nullptr) {
  switch (m.config.kind) {
    case ModelKind::kOurs:
    case ModelKind::kOursMood: {
      if (lyric.embedded.rows() == 0) throw EmptyLyricError("model_forward: no embeddable token");
      const int row = m.config.kind == ModelKind::kOursMood ? m.mood_row(mood) : -1;
      return encoder_forward(m.encoder, lyric.embedded, nullptr, row,
                             cache ? &cache->enc : nullptr);
    }
    case ModelKind::kOursAttention: {
      if (lyric.embedded.rows() == 0) throw EmptyLyricError("model_forward: no embeddable token");
      Matrix vtilde = tag_attention_vector(image_tags, tag_names, m.config.tag_group,
                                           m.config.k_tags, m.config.pooling, table);
      return encoder_forward(m.encoder, lyric.embedded, &vtilde, -1,
                             cache ? &cache->enc : nullptr);
    }
    case ModelKind::kConse: {
      Matrix mean = conse_encode(lyric.embedded);
      Matrix out = mlp_forward(m.conse, mean, cache ? &cache->mlp : nullptr);
      if (cache) cache->mlp_in = std::move(mean);
      return out;
    }
    case ModelKind::kBow: {
      Matrix feats = bow_features(lyric.words, m.bow_vocab);
      Matrix out = mlp_forward(m.bow, feats, cache ? &cache->mlp : nullptr);
      if (cache) cache->mlp_in = std::move(feats);
      return out;
    }
    case ModelKind::kAttReader:
      throw ConfigError("model_forward: attreader scores pairs; use attreader_score");
  }
  throw ConfigError("model_forward: unknown kind");
}

inline void model_backward(const Model& m, const ModelCache& cache, const Matrix& d_prediction,
                           Model& grads) {
  switch (m.config.kind) {
    case ModelKind::kOurs:
    case ModelKind::kOursAttention:
    case ModelKind::kOursMood:
      encoder_backward(m.encoder, cache.enc, d_prediction, grads.encoder);
      break;
    case ModelKind::kConse:
      mlp_backward(m.conse, cache.mlp, d_prediction, grads.conse);
      break;
    case ModelKind::kBow:
      mlp_backward(m.bow, cache.mlp, d_prediction, grads.bow);
      break;
    case ModelKind::kAttReader:
      throw ConfigError("model_backward: attreader uses attreader_backward");
  }
}

// The attention vector for a pair-scored or attention model given a query
// image's tags.
inline Matrix model_tag_attention(const Model& m, const std::vector<double>& image_tags,
                                  const EmbeddingTable& table,
                                  const std::vector<std::string>& tag_names) {
  return tag_attention_vector(image_tags, tag_names, m.config.tag_group, m.config.k_tags,
                              m.config.pooling, table);
}

}  // namespace tagsong
