#pragma once

#include <algorithm>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <json.hpp>

#include "tagsong/errors.hpp"
#include "tagsong/matrix.hpp"
#include "tagsong/rng.hpp"

namespace tagsong {

inline constexpr std::size_t kTagDim = 515;
inline constexpr std::size_t kObjectTagCount = 266;     // dims [0, 266)
inline constexpr std::size_t kAttributeTagCount = 249;  // dims [266, 515)

enum class TagGroup { kObject, kAttribute, kObjectAttribute };

inline std::string to_string(TagGroup g) {
  switch (g) {
    case TagGroup::kObject: return "obj";
    case TagGroup::kAttribute: return "attr";
    case TagGroup::kObjectAttribute: return "obj-attr";
  }
  return "obj-attr";
}

inline TagGroup parse_tag_group(const std::string& s) {
  if (s == "obj") return TagGroup::kObject;
  if (s == "attr") return TagGroup::kAttribute;
  if (s == "obj-attr" || s == "both") return TagGroup::kObjectAttribute;
  throw ConfigError("unknown tag group '" + s + "' (expected obj, attr, or obj-attr)");
}

// [begin, end) of the group inside the full 515-dim layout.
inline std::pair<std::size_t, std::size_t> tag_group_range(TagGroup g) {
  switch (g) {
    case TagGroup::kObject: return {0, kObjectTagCount};
    case TagGroup::kAttribute: return {kObjectTagCount, kTagDim};
    case TagGroup::kObjectAttribute: return {0, kTagDim};
  }
  return {0, kTagDim};
}

inline std::size_t tag_group_dim(TagGroup g) {
  auto [b, e] = tag_group_range(g);
  return e - b;
}

// Selects the group's dimensions as a column vector.
inline Matrix mask_tags(const std::vector<double>& tags, TagGroup g) {
  if (tags.size() != kTagDim) throw ShapeError("mask_tags: tag vector must have 515 entries");
  auto [b, e] = tag_group_range(g);
  Matrix out(e - b, 1);
  for (std::size_t i = b; i < e; ++i) out[i - b] = tags[i];
  return out;
}

// One (image, song) sample. The music clip is represented by song_id only.
struct TripletRecord {
  std::string id;
  std::string song_id;
  std::string lyric;
  std::vector<double> tags;  // 515 probabilities in [0, 1]
  std::optional<std::string> mood;
  std::int64_t favorite_count = 1;
};

inline std::string normalize_mood(const std::string& raw) {
  std::size_t b = raw.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  std::size_t e = raw.find_last_not_of(" \t\r\n");
  std::string out = raw.substr(b, e - b + 1);
  for (auto& ch : out) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return out;
}

// JSONL, one record per line:
// {"id": str, "song_id": str, "lyric": str, "tags": [515 floats],
//  "mood": str|null, "favorite_count": int}
// Tag values outside [0,1] by at most 1e-6 are clamped with a warning;
// anything further out is a schema error.
inline std::vector<TripletRecord> load_triplets(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_triplets: cannot open " + path);
  std::vector<TripletRecord> records;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw ParseError(path + ":" + std::to_string(line_no) + ": " + e.what());
    }
    const std::string where = path + ":" + std::to_string(line_no);
    try {
      TripletRecord rec;
      rec.id = j.at("id").get<std::string>();
      rec.song_id = j.at("song_id").get<std::string>();
      rec.lyric = j.at("lyric").get<std::string>();
      const auto& tags = j.at("tags");
      if (!tags.is_array() || tags.size() != kTagDim) {
        throw SchemaError(where + ": tags must be an array of " + std::to_string(kTagDim) +
                          " floats, got " + std::to_string(tags.size()));
      }
      rec.tags.reserve(kTagDim);
      for (std::size_t i = 0; i < kTagDim; ++i) {
        double v = tags[i].get<double>();
        if (v < 0.0 || v > 1.0) {
          if (v >= -1e-6 && v <= 1.0 + 1e-6) {
            std::cerr << "warning: " << where << ": tag " << i << " = " << v
                      << " clamped into [0,1]\n";
            v = std::min(1.0, std::max(0.0, v));
          } else {
            throw SchemaError(where + ": tag " + std::to_string(i) + " outside [0,1]");
          }
        }
        rec.tags.push_back(v);
      }
      if (j.contains("mood") && !j.at("mood").is_null()) {
        const std::string mood = normalize_mood(j.at("mood").get<std::string>());
        if (!mood.empty()) rec.mood = mood;
      }
      rec.favorite_count = j.at("favorite_count").get<std::int64_t>();
      if (rec.favorite_count < 1) throw SchemaError(where + ": favorite_count must be >= 1");
      records.push_back(std::move(rec));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(where + ": " + e.what());
    }
  }
  return records;
}

inline void save_triplets(const std::string& path, const std::vector<TripletRecord>& records) {
  std::ofstream out(path);
  if (!out) throw ParseError("save_triplets: cannot open " + path + " for writing");
  for (const auto& rec : records) {
    nlohmann::json j;
    j["id"] = rec.id;
    j["song_id"] = rec.song_id;
    j["lyric"] = rec.lyric;
    j["tags"] = rec.tags;
    if (rec.mood) {
      j["mood"] = *rec.mood;
    } else {
      j["mood"] = nullptr;
    }
    j["favorite_count"] = rec.favorite_count;
    out << j.dump() << "\n";
  }
}

// Keeps songs with at least min_occurrence triplets; within each song keeps
// the per_song records with the highest favorite counts (ties broken by id
// ascending). per_song = 0 disables the truncation. Input order is preserved.
inline std::vector<TripletRecord> filter_triplets(const std::vector<TripletRecord>& records,
                                                  std::size_t min_occurrence = 5,
                                                  std::size_t per_song = 5) {
  std::map<std::string, std::vector<const TripletRecord*>> by_song;
  for (const auto& rec : records) by_song[rec.song_id].push_back(&rec);

  std::unordered_set<const TripletRecord*> keep;
  for (auto& [song, recs] : by_song) {
    if (recs.size() < min_occurrence) continue;
    std::sort(recs.begin(), recs.end(), [](const TripletRecord* a, const TripletRecord* b) {
      if (a->favorite_count != b->favorite_count) return a->favorite_count > b->favorite_count;
      return a->id < b->id;
    });
    const std::size_t take = per_song == 0 ? recs.size() : std::min(per_song, recs.size());
    for (std::size_t i = 0; i < take; ++i) keep.insert(recs[i]);
  }

  std::vector<TripletRecord> out;
  for (const auto& rec : records) {
    if (keep.count(&rec)) out.push_back(rec);
  }
  return out;
}

enum class SplitMode { kDagger, kSection };

inline std::string to_string(SplitMode m) {
  return m == SplitMode::kDagger ? "dagger" : "section";
}

inline SplitMode parse_split_mode(const std::string& s) {
  if (s == "dagger") return SplitMode::kDagger;
  if (s == "section") return SplitMode::kSection;
  throw ConfigError("unknown split mode '" + s + "' (expected dagger or section)");
}

struct SplitSpec {
  SplitMode mode = SplitMode::kDagger;
  std::uint64_t seed = 0;
  std::vector<std::string> train_ids;
  std::vector<std::string> test_ids;
};

// dagger: holds out whole songs (test songs never seen in training).
// section: every song keeps one record for test and the rest for training.
inline SplitSpec make_split(const std::vector<TripletRecord>& records, SplitMode mode,
                            std::uint64_t seed, std::size_t test_songs = 100) {
  std::map<std::string, std::vector<std::string>> by_song;  // song -> record ids
  for (const auto& rec : records) by_song[rec.song_id].push_back(rec.id);
  for (auto& [song, ids] : by_song) std::sort(ids.begin(), ids.end());

  SplitSpec spec;
  spec.mode = mode;
  spec.seed = seed;
  Rng rng(seed);

  if (mode == SplitMode::kDagger) {
    if (by_song.size() < test_songs) {
      throw ParameterError("make_split: " + std::to_string(by_song.size()) +
                           " songs but " + std::to_string(test_songs) + " test songs requested");
    }
    std::vector<std::string> songs;
    for (const auto& [song, ids] : by_song) songs.push_back(song);
    rng.shuffle(songs);
    std::set<std::string> test_set(songs.begin(), songs.begin() + test_songs);
    for (const auto& [song, ids] : by_song) {
      auto& dst = test_set.count(song) ? spec.test_ids : spec.train_ids;
      dst.insert(dst.end(), ids.begin(), ids.end());
    }
  } else {
    for (const auto& [song, ids] : by_song) {
      if (ids.size() < 2) {
        throw ParameterError("make_split: song '" + song +
                             "' has fewer than 2 records; section split needs both sides");
      }
      const std::size_t pick = rng.next_below(ids.size());
      for (std::size_t i = 0; i < ids.size(); ++i) {
        (i == pick ? spec.test_ids : spec.train_ids).push_back(ids[i]);
      }
    }
  }
  std::sort(spec.train_ids.begin(), spec.train_ids.end());
  std::sort(spec.test_ids.begin(), spec.test_ids.end());
  return spec;
}

inline void save_split(const std::string& path, const SplitSpec& spec) {
  nlohmann::json j;
  j["mode"] = to_string(spec.mode);
  j["seed"] = spec.seed;
  j["train"] = spec.train_ids;
  j["test"] = spec.test_ids;
  std::ofstream out(path);
  if (!out) throw ParseError("save_split: cannot open " + path + " for writing");
  out << j.dump(2) << "\n";
}

inline SplitSpec load_split(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_split: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  try {
    SplitSpec spec;
    spec.mode = parse_split_mode(j.at("mode").get<std::string>());
    spec.seed = j.at("seed").get<std::uint64_t>();
    spec.train_ids = j.at("train").get<std::vector<std::string>>();
    spec.test_ids = j.at("test").get<std::vector<std::string>>();
    return spec;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

// Partitions records by the split's id lists. Ids that match no record are a
// schema error; records listed on both sides violate the split invariant.
inline std::pair<std::vector<TripletRecord>, std::vector<TripletRecord>> apply_split(
    const std::vector<TripletRecord>& records, const SplitSpec& spec) {
  std::map<std::string, const TripletRecord*> by_id;
  for (const auto& rec : records) {
    if (!by_id.emplace(rec.id, &rec).second) {
      throw SchemaError("apply_split: duplicate record id '" + rec.id + "'");
    }
  }
  auto collect = [&](const std::vector<std::string>& ids) {
    std::vector<TripletRecord> out;
    for (const auto& id : ids) {
      auto it = by_id.find(id);
      if (it == by_id.end()) throw SchemaError("apply_split: unknown record id '" + id + "'");
      out.push_back(*it->second);
    }
    return out;
  };
  std::unordered_set<std::string> train_set(spec.train_ids.begin(), spec.train_ids.end());
  for (const auto& id : spec.test_ids) {
    if (train_set.count(id)) {
      throw SchemaError("apply_split: record '" + id + "' appears in both train and test");
    }
  }
  return {collect(spec.train_ids), collect(spec.test_ids)};
}

// Per-dimension mean probability over the group's dims, sorted descending
// (ties by lower index). Indices are absolute positions in the 515 layout.
inline std::vector<std::pair<std::size_t, double>> tag_distribution_stats(
    const std::vector<TripletRecord>& records, TagGroup group) {
  if (records.empty()) throw ParameterError("tag_distribution_stats: no records");
  auto [b, e] = tag_group_range(group);
  std::vector<std::pair<std::size_t, double>> stats;
  stats.reserve(e - b);
  for (std::size_t dim = b; dim < e; ++dim) {
    double sum = 0.0;
    for (const auto& rec : records) sum += rec.tags[dim];
    stats.emplace_back(dim, sum / static_cast<double>(records.size()));
  }
  std::sort(stats.begin(), stats.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  return stats;
}

// Tag-name file: exactly one name per line, line i names dimension i.
inline std::vector<std::string> load_tag_names(const std::string& path,
                                               std::size_t expected = kTagDim) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_tag_names: cannot open " + path);
  std::vector<std::string> names;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    names.push_back(line);
  }
  while (!names.empty() && names.back().empty()) names.pop_back();
  if (names.size() != expected) {
    throw SchemaError(path + ": expected " + std::to_string(expected) + " tag names, got " +
                      std::to_string(names.size()));
  }
  return names;
}

}  // namespace tagsong
