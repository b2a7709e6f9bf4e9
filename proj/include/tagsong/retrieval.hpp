#pragma once

#include <algorithm>
#include <map>
#include <numeric>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tagsong/baselines.hpp"
#include "tagsong/losses.hpp"
#include "tagsong/model.hpp"

namespace tagsong {

enum class Direction { kImage2Song, kSong2Image };

inline std::string to_string(Direction d) {
  return d == Direction::kImage2Song ? "image2song" : "song2image";
}

inline Direction parse_direction(const std::string& s) {
  if (s == "image2song") return Direction::kImage2Song;
  if (s == "song2image") return Direction::kSong2Image;
  throw ConfigError("unknown direction '" + s + "' (expected image2song or song2image)");
}

struct RankingResult {
  std::string query_id;
  std::vector<std::string> candidate_ids;  // descending similarity
  std::vector<double> similarities;        // aligned with candidate_ids
  std::vector<bool> relevant;              // aligned with candidate_ids
};

// Orders candidates by score descending; ties keep the gallery order.
inline RankingResult rank_scores(const std::string& query_id,
                                 const std::vector<std::string>& ids,
                                 const std::vector<double>& scores,
                                 const std::set<std::string>& relevant_ids) {
  if (ids.size() != scores.size()) throw ShapeError("rank_scores: ids/scores length mismatch");
  if (ids.empty()) throw ParameterError("rank_scores: empty gallery");
  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  RankingResult r;
  r.query_id = query_id;
  bool any_relevant = false;
  for (std::size_t i : order) {
    r.candidate_ids.push_back(ids[i]);
    r.similarities.push_back(scores[i]);
    const bool rel = relevant_ids.count(ids[i]) > 0;
    r.relevant.push_back(rel);
    any_relevant = any_relevant || rel;
  }
  if (!any_relevant) {
    throw ParameterError("rank_scores: no relevant candidate for query '" + query_id + "'");
  }
  return r;
}

// Cosine ranking of a query vector against a vector gallery.
inline RankingResult rank_candidates(const std::string& query_id, const Matrix& query,
                                     const std::vector<std::pair<std::string, Matrix>>& gallery,
                                     const std::set<std::string>& relevant_ids) {
  std::vector<std::string> ids;
  std::vector<double> scores;
  ids.reserve(gallery.size());
  scores.reserve(gallery.size());
  for (const auto& [id, vec] : gallery) {
    ids.push_back(id);
    scores.push_back(cosine_similarity(query, vec));
  }
  return rank_scores(query_id, ids, scores, relevant_ids);
}

// Percentage of queries with at least one relevant item in the top k.
inline double recall_at_k(const std::vector<RankingResult>& results, std::size_t k) {
  if (k == 0) throw ParameterError("recall_at_k: k must be >= 1");
  if (results.empty()) throw ParameterError("recall_at_k: no results");
  std::size_t hits = 0;
  for (const auto& r : results) {
    const std::size_t top = std::min(k, r.relevant.size());
    for (std::size_t i = 0; i < top; ++i) {
      if (r.relevant[i]) {
        ++hits;
        break;
      }
    }
  }
  return 100.0 * static_cast<double>(hits) / static_cast<double>(results.size());
}

// 1-based rank of the best relevant item for one query.
inline std::size_t best_relevant_rank(const RankingResult& r) {
  for (std::size_t i = 0; i < r.relevant.size(); ++i) {
    if (r.relevant[i]) return i + 1;
  }
  throw ParameterError("best_relevant_rank: no relevant candidate");
}

// Median over queries of the best relevant rank; an even count averages the
// two middle values, which is how fractional medians arise.
inline double median_rank(const std::vector<RankingResult>& results) {
  if (results.empty()) throw ParameterError("median_rank: no results");
  std::vector<std::size_t> ranks;
  ranks.reserve(results.size());
  for (const auto& r : results) ranks.push_back(best_relevant_rank(r));
  std::sort(ranks.begin(), ranks.end());
  const std::size_t n = ranks.size();
  if (n % 2 == 1) return static_cast<double>(ranks[n / 2]);
  return (static_cast<double>(ranks[n / 2 - 1]) + static_cast<double>(ranks[n / 2])) / 2.0;
}

struct MetricsReport {
  std::string model;
  Direction direction = Direction::kImage2Song;
  SplitMode mode = SplitMode::kDagger;
  TagGroup tag_group = TagGroup::kObjectAttribute;
  std::size_t num_queries = 0;
  std::size_t gallery_size = 0;
  std::vector<std::pair<std::size_t, double>> recall;  // (k, percent)
  double med_r = 0.0;
};

inline std::vector<std::size_t> recall_ks(SplitMode mode) {
  if (mode == SplitMode::kDagger) return {1, 5, 10};
  return {10, 50, 100};
}

namespace detail {

// Gallery songs in deterministic order with one canonical lyric each: the
// test record with the smallest id represents its song.
struct SongGallery {
  std::vector<std::string> song_ids;
  std::vector<const TripletRecord*> canonical;
  std::vector<LyricInput> lyrics;
};

inline SongGallery build_song_gallery(const std::vector<TripletRecord>& test_records,
                                      const EmbeddingTable& table, std::size_t max_len) {
  std::map<std::string, const TripletRecord*> by_song;
  for (const auto& rec : test_records) {
    auto [it, fresh] = by_song.try_emplace(rec.song_id, &rec);
    if (!fresh && rec.id < it->second->id) it->second = &rec;
  }
  SongGallery g;
  for (const auto& [song, rec] : by_song) {
    g.song_ids.push_back(song);
    g.canonical.push_back(rec);
    g.lyrics.push_back(prepare_lyric(rec->lyric, table, max_len));
  }
  return g;
}

}  // namespace detail

// Scores every (image record, song) pair of the test set and assembles the
// requested direction's rankings. Relevance is song identity. Attention
// kinds re-encode the lyric for each query image, since their lyric
// representation depends on the image's tags.
inline MetricsReport evaluate(const Model& model, const EmbeddingTable& table,
                              const std::vector<std::string>& tag_names,
                              const std::vector<TripletRecord>& test_records, SplitMode mode,
                              Direction direction) {
  if (test_records.empty()) throw ParameterError("evaluate: empty test set");
  if (model.output_dim() != tag_group_dim(model.config.tag_group)) {
    throw ConfigError("evaluate: model output dim does not match its tag group");
  }
  const TagGroup group = model.config.tag_group;

  std::vector<const TripletRecord*> images;
  for (const auto& rec : test_records) images.push_back(&rec);
  std::sort(images.begin(), images.end(),
            [](const TripletRecord* a, const TripletRecord* b) { return a->id < b->id; });

  detail::SongGallery songs =
      detail::build_song_gallery(test_records, table, model.config.max_len);
  const std::size_t S = songs.song_ids.size();
  const std::size_t Q = images.size();

  // pair_score(i, s): relevance of image i to song s.
  std::vector<std::vector<double>> score(Q, std::vector<double>(S, 0.0));
  if (model.pair_scored()) {
    for (std::size_t i = 0; i < Q; ++i) {
      const Matrix v = mask_tags(images[i]->tags, group);
      const Matrix vtilde = model_tag_attention(model, images[i]->tags, table, tag_names);
      for (std::size_t s = 0; s < S; ++s) {
        score[i][s] = attreader_score(model.attreader, v, songs.lyrics[s].embedded, vtilde);
      }
    }
  } else if (model.uses_tag_attention()) {
    for (std::size_t i = 0; i < Q; ++i) {
      const Matrix v = mask_tags(images[i]->tags, group);
      for (std::size_t s = 0; s < S; ++s) {
        Matrix proj = model_forward(model, songs.lyrics[s], images[i]->tags,
                                    songs.canonical[s]->mood, table, tag_names);
        score[i][s] = cosine_similarity(v, proj);
      }
    }
  } else {
    std::vector<Matrix> projections;
    projections.reserve(S);
    for (std::size_t s = 0; s < S; ++s) {
      projections.push_back(model_forward(model, songs.lyrics[s], songs.canonical[s]->tags,
                                          songs.canonical[s]->mood, table, tag_names));
    }
    for (std::size_t i = 0; i < Q; ++i) {
      const Matrix v = mask_tags(images[i]->tags, group);
      for (std::size_t s = 0; s < S; ++s) {
        score[i][s] = cosine_similarity(v, projections[s]);
      }
    }
  }

  std::vector<RankingResult> results;
  if (direction == Direction::kImage2Song) {
    for (std::size_t i = 0; i < Q; ++i) {
      std::vector<double> row = score[i];
      results.push_back(
          rank_scores(images[i]->id, songs.song_ids, row, {images[i]->song_id}));
    }
  } else {
    std::vector<std::string> image_ids;
    for (const auto* rec : images) image_ids.push_back(rec->id);
    for (std::size_t s = 0; s < S; ++s) {
      std::vector<double> col(Q);
      std::set<std::string> relevant;
      for (std::size_t i = 0; i < Q; ++i) {
        col[i] = score[i][s];
        if (images[i]->song_id == songs.song_ids[s]) relevant.insert(images[i]->id);
      }
      results.push_back(rank_scores(songs.song_ids[s], image_ids, col, relevant));
    }
  }

  MetricsReport report;
  report.model = to_string(model.config.kind);
  report.direction = direction;
  report.mode = mode;
  report.tag_group = group;
  report.num_queries = results.size();
  report.gallery_size = direction == Direction::kImage2Song ? S : Q;
  for (std::size_t k : recall_ks(mode)) {
    report.recall.emplace_back(k, recall_at_k(results, k));
  }
  report.med_r = median_rank(results);
  return report;
}

}  // namespace tagsong
