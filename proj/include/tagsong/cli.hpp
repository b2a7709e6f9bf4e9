#pragma once

#include <algorithm>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tagsong/checkpoint.hpp"
#include "tagsong/dataset.hpp"
#include "tagsong/model.hpp"
#include "tagsong/model_check.hpp"
#include "tagsong/retrieval.hpp"
#include "tagsong/trainer.hpp"

namespace tagsong {

// Exit codes: 0 success, 1 config/schema error, 2 numeric failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 1;
inline constexpr int kExitNumeric = 2;

template <typename Fn>
int run_guarded(Fn&& fn, std::ostream& err) {
  try {
    return fn();
  } catch (const NumericError& e) {
    err << "error: " << e.what() << "\n";
    return kExitNumeric;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitConfig;
  }
}

namespace detail {

inline void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("cannot open " + path + " for writing");
  out << content;
}

inline void write_json_file(const std::string& path, const nlohmann::json& j) {
  write_text_file(path, j.dump(1) + "\n");
}

inline EmbeddingTable load_table_or_empty(const std::string& path, std::size_t dim) {
  if (path.empty()) return EmbeddingTable(dim);
  return load_embeddings(path, dim);
}

inline std::vector<std::string> load_names_or_empty(const std::string& path) {
  if (path.empty()) return {};
  return load_tag_names(path);
}

inline void require_attention_inputs(const Model& model,
                                     const std::vector<std::string>& tag_names,
                                     const EmbeddingTable& table) {
  if (!model.uses_tag_attention()) return;
  if (tag_names.size() != kTagDim) {
    throw ConfigError("attention models need --tag-names (515 names)");
  }
  if (table.size() == 0) {
    throw ConfigError("attention models need --embeddings");
  }
}

}  // namespace detail

// ---- prepare ----------------------------------------------------------------

struct PrepareOptions {
  std::string triplets;
  std::string split_out;
  std::string filtered_out;  // optional: write the surviving records
  SplitMode mode = SplitMode::kDagger;
  std::uint64_t seed = 0;
  std::size_t min_occurrence = 5;
  std::size_t per_song = 5;
  std::size_t test_songs = 100;
};

inline int cmd_prepare(const PrepareOptions& opt, std::ostream& out, std::ostream& err) {
  const auto records = load_triplets(opt.triplets);
  const auto filtered = filter_triplets(records, opt.min_occurrence, opt.per_song);
  std::set<std::string> songs;
  for (const auto& rec : filtered) songs.insert(rec.song_id);
  if (!opt.filtered_out.empty()) save_triplets(opt.filtered_out, filtered);
  if (filtered.empty()) {
    err << "warning: no songs survive filtering (min_occurrence=" << opt.min_occurrence
        << "); no split written\n";
    out << "input triplets: " << records.size() << "\n";
    out << "kept songs: 0\nkept triplets: 0\n";
    return kExitOk;
  }
  const SplitSpec split = make_split(filtered, opt.mode, opt.seed, opt.test_songs);
  save_split(opt.split_out, split);
  out << "input triplets: " << records.size() << "\n";
  out << "kept songs: " << songs.size() << "\n";
  out << "kept triplets: " << filtered.size() << "\n";
  out << "mode: " << to_string(opt.mode) << "\n";
  out << "train triplets: " << split.train_ids.size() << "\n";
  out << "test triplets: " << split.test_ids.size() << "\n";
  return kExitOk;
}

// ---- train --------------------------------------------------------------------

struct TrainOptions {
  std::string triplets;
  std::string embeddings;
  std::string tag_names;
  std::string split;
  std::string checkpoint_out;
  std::string resume;   // checkpoint to continue from
  std::string log_out;  // optional TSV copy of the per-epoch log
  ModelConfig model;
  TrainConfig train;
};

inline int cmd_train(const TrainOptions& opt, std::ostream& out, std::ostream& err) {
  (void)err;
  if (opt.checkpoint_out.empty()) throw ConfigError("train: --checkpoint is required");
  const EmbeddingTable table =
      detail::load_table_or_empty(opt.embeddings, opt.model.embedding_dim);
  if (opt.model.kind != ModelKind::kBow && table.size() == 0) {
    throw ConfigError("train: --embeddings is required for model '" +
                      to_string(opt.model.kind) + "'");
  }
  const auto tag_names = detail::load_names_or_empty(opt.tag_names);
  const auto records = load_triplets(opt.triplets);
  const SplitSpec split = load_split(opt.split);
  auto [train_records, test_records] = apply_split(records, split);
  (void)test_records;
  if (train_records.empty()) throw ConfigError("train: split has no training records");

  Model model;
  Rmsprop opt_state(RmspropConfig{opt.train.learning_rate, opt.train.rho, opt.train.eps});
  TrainConfig tcfg = opt.train;
  if (!opt.resume.empty()) {
    Checkpoint ck = load_checkpoint(opt.resume);
    model = std::move(ck.model);
    opt_state.state() = std::move(ck.opt_state);
    tcfg.start_epoch = ck.epochs_done;
    tcfg.seed = ck.seed;
  } else {
    model = build_model(opt.model, opt.train.seed, train_records, table);
  }
  detail::require_attention_inputs(model, tag_names, table);

  std::ostringstream log;
  const auto logs = train(model, train_records, table, tag_names, tcfg, opt_state, &log);
  out << log.str();
  if (!opt.log_out.empty()) detail::write_text_file(opt.log_out, log.str());

  const std::size_t epochs_done = tcfg.start_epoch + tcfg.epochs;
  const double final_loss = logs.empty() ? 0.0 : logs.back().loss;
  save_checkpoint(opt.checkpoint_out, model, opt_state, epochs_done, final_loss);

  nlohmann::json summary;
  summary["seed"] = tcfg.seed;
  summary["epochs_done"] = epochs_done;
  summary["final_loss"] = final_loss;
  summary["loss"] = to_string(tcfg.loss);
  summary["batch_size"] = tcfg.batch_size;
  summary["learning_rate"] = tcfg.learning_rate;
  summary["rho"] = tcfg.rho;
  summary["eps"] = tcfg.eps;
  summary["clip_norm"] = tcfg.clip_norm;
  summary["model"] = detail::config_to_json(model.config);
  detail::write_json_file(opt.checkpoint_out + ".summary.json", summary);
  return kExitOk;
}

// ---- eval ----------------------------------------------------------------------

struct EvalOptions {
  std::string triplets;
  std::string embeddings;
  std::string tag_names;
  std::string split;
  std::string checkpoint;
  std::string report_out;  // optional JSON report path
  std::vector<Direction> directions = {Direction::kImage2Song};
};

inline nlohmann::json metrics_to_json(const MetricsReport& r) {
  nlohmann::json j;
  j["direction"] = to_string(r.direction);
  j["num_queries"] = r.num_queries;
  j["gallery_size"] = r.gallery_size;
  nlohmann::json recall = nlohmann::json::array();
  for (const auto& [k, v] : r.recall) {
    recall.push_back({{"k", k}, {"value", v}});
  }
  j["recall"] = std::move(recall);
  j["med_r"] = r.med_r;
  return j;
}

inline void print_metrics_table(const std::vector<MetricsReport>& reports, std::ostream& out) {
  if (reports.empty()) return;
  out << std::left << std::setw(12) << "direction";
  for (const auto& [k, v] : reports.front().recall) {
    out << std::setw(8) << ("R@" + std::to_string(k));
  }
  out << "Med r\n";
  out << std::fixed << std::setprecision(2);
  for (const auto& r : reports) {
    out << std::left << std::setw(12) << to_string(r.direction);
    for (const auto& [k, v] : r.recall) out << std::setw(8) << v;
    out << r.med_r << "\n";
  }
  out.unsetf(std::ios::fixed);
  out << std::setprecision(6);
}

inline int cmd_eval(const EvalOptions& opt, std::ostream& out, std::ostream& err) {
  (void)err;
  Checkpoint ck = load_checkpoint(opt.checkpoint);
  Model& model = ck.model;
  const EmbeddingTable table =
      detail::load_table_or_empty(opt.embeddings, model.config.embedding_dim);
  if (model.config.kind != ModelKind::kBow && table.size() == 0) {
    throw ConfigError("eval: --embeddings is required for model '" +
                      to_string(model.config.kind) + "'");
  }
  const auto tag_names = detail::load_names_or_empty(opt.tag_names);
  detail::require_attention_inputs(model, tag_names, table);
  const auto records = load_triplets(opt.triplets);
  const SplitSpec split = load_split(opt.split);
  auto [train_records, test_records] = apply_split(records, split);
  (void)train_records;
  if (test_records.empty()) throw ConfigError("eval: split has no test records");

  std::vector<MetricsReport> reports;
  for (Direction dir : opt.directions) {
    reports.push_back(evaluate(model, table, tag_names, test_records, split.mode, dir));
  }
  print_metrics_table(reports, out);

  nlohmann::json j;
  j["model"] = to_string(model.config.kind);
  j["mode"] = to_string(split.mode);
  j["tag_group"] = to_string(model.config.tag_group);
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : reports) arr.push_back(metrics_to_json(r));
  j["reports"] = std::move(arr);
  if (!opt.report_out.empty()) detail::write_json_file(opt.report_out, j);
  return kExitOk;
}

// ---- retrieve -------------------------------------------------------------------

struct RetrieveOptions {
  std::string triplets;
  std::string embeddings;
  std::string tag_names;
  std::string split;
  std::string checkpoint;
  Direction direction = Direction::kImage2Song;
  std::size_t top_n = 10;
  std::string query_tags;   // image2song: JSON file, array of 515 floats
  std::string query_lyric;  // song2image: text file with the lyric
  std::string report_out;
};

inline std::vector<double> load_query_tags(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("load_query_tags: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  if (!j.is_array() || j.size() != kTagDim) {
    throw SchemaError(path + ": expected an array of " + std::to_string(kTagDim) + " floats");
  }
  return j.get<std::vector<double>>();
}

inline int cmd_retrieve(const RetrieveOptions& opt, std::ostream& out, std::ostream& err) {
  (void)err;
  Checkpoint ck = load_checkpoint(opt.checkpoint);
  Model& model = ck.model;
  const EmbeddingTable table =
      detail::load_table_or_empty(opt.embeddings, model.config.embedding_dim);
  const auto tag_names = detail::load_names_or_empty(opt.tag_names);
  detail::require_attention_inputs(model, tag_names, table);
  const auto records = load_triplets(opt.triplets);
  const SplitSpec split = load_split(opt.split);
  auto [train_records, test_records] = apply_split(records, split);
  (void)train_records;
  if (test_records.empty()) throw ConfigError("retrieve: split has no test records");
  const TagGroup group = model.config.tag_group;

  std::vector<std::string> ids;
  std::vector<double> scores;

  if (opt.direction == Direction::kImage2Song) {
    if (opt.query_tags.empty()) {
      throw ConfigError("retrieve image2song: --query-tags is required");
    }
    const auto tags = load_query_tags(opt.query_tags);
    const Matrix v = mask_tags(tags, group);
    auto songs = detail::build_song_gallery(test_records, table, model.config.max_len);
    if (model.pair_scored()) {
      const Matrix vtilde = model_tag_attention(model, tags, table, tag_names);
      for (std::size_t s = 0; s < songs.song_ids.size(); ++s) {
        ids.push_back(songs.song_ids[s]);
        scores.push_back(
            attreader_score(model.attreader, v, songs.lyrics[s].embedded, vtilde));
      }
    } else {
      for (std::size_t s = 0; s < songs.song_ids.size(); ++s) {
        Matrix proj = model_forward(model, songs.lyrics[s], tags, songs.canonical[s]->mood,
                                    table, tag_names);
        ids.push_back(songs.song_ids[s]);
        scores.push_back(cosine_similarity(v, proj));
      }
    }
  } else {
    if (opt.query_lyric.empty()) {
      throw ConfigError("retrieve song2image: --query-lyric is required");
    }
    std::ifstream in(opt.query_lyric);
    if (!in) throw ParseError("cannot open " + opt.query_lyric);
    std::stringstream buf;
    buf << in.rdbuf();
    const LyricInput lyric = prepare_lyric(buf.str(), table, model.config.max_len);
    std::vector<const TripletRecord*> images;
    for (const auto& rec : test_records) images.push_back(&rec);
    std::sort(images.begin(), images.end(),
              [](const TripletRecord* a, const TripletRecord* b) { return a->id < b->id; });
    if (model.pair_scored() || model.uses_tag_attention()) {
      for (const auto* img : images) {
        const Matrix v = mask_tags(img->tags, group);
        ids.push_back(img->id);
        if (model.pair_scored()) {
          const Matrix vtilde = model_tag_attention(model, img->tags, table, tag_names);
          scores.push_back(attreader_score(model.attreader, v, lyric.embedded, vtilde));
        } else {
          Matrix proj =
              model_forward(model, lyric, img->tags, std::nullopt, table, tag_names);
          scores.push_back(cosine_similarity(v, proj));
        }
      }
    } else {
      Matrix proj = model_forward(model, lyric, std::vector<double>(kTagDim, 0.0),
                                  std::nullopt, table, tag_names);
      for (const auto* img : images) {
        ids.push_back(img->id);
        scores.push_back(cosine_similarity(mask_tags(img->tags, group), proj));
      }
    }
  }

  std::vector<std::size_t> order(ids.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  const std::size_t n = std::min(opt.top_n, order.size());
  nlohmann::json results = nlohmann::json::array();
  for (std::size_t r = 0; r < n; ++r) {
    const std::size_t i = order[r];
    out << (r + 1) << "\t" << ids[i] << "\t" << format_loss(scores[i]) << "\n";
    results.push_back({{"rank", r + 1}, {"id", ids[i]}, {"similarity", scores[i]}});
  }
  if (!opt.report_out.empty()) {
    nlohmann::json j;
    j["direction"] = to_string(opt.direction);
    j["top_n"] = opt.top_n;
    j["results"] = std::move(results);
    detail::write_json_file(opt.report_out, j);
  }
  return kExitOk;
}

// ---- gradcheck ------------------------------------------------------------------

struct GradcheckOptions {
  std::vector<ModelKind> kinds = {ModelKind::kOurs,     ModelKind::kOursAttention,
                                  ModelKind::kOursMood, ModelKind::kBow,
                                  ModelKind::kConse,    ModelKind::kAttReader};
  LossKind loss = LossKind::kMse;
  std::uint64_t seed = 0;
  std::size_t num_seeds = 1;
  bool corrupt = false;  // negative-control hook: damages one analytic entry
  double tol = 1e-4;
  std::string report_out;
};

inline int cmd_gradcheck(const GradcheckOptions& opt, std::ostream& out, std::ostream& err) {
  (void)err;
  bool all_pass = true;
  nlohmann::json jreports = nlohmann::json::array();
  for (ModelKind kind : opt.kinds) {
    for (std::size_t s = 0; s < opt.num_seeds; ++s) {
      const std::uint64_t seed = opt.seed + s;
      const GradCheckReport rep = check_model_gradients(kind, opt.loss, seed, opt.corrupt);
      const bool pass = rep.pass(opt.tol);
      all_pass = all_pass && pass;
      out << to_string(kind) << " loss=" << to_string(rep.loss) << " seed=" << seed
          << " worst=" << format_loss(rep.worst) << (pass ? " PASS" : " FAIL") << "\n";
      nlohmann::json jr;
      jr["model"] = to_string(kind);
      jr["loss"] = to_string(rep.loss);
      jr["seed"] = seed;
      jr["worst"] = rep.worst;
      jr["pass"] = pass;
      nlohmann::json blocks = nlohmann::json::array();
      for (const auto& b : rep.blocks) {
        out << "  " << std::left << std::setw(16) << b.name << format_loss(b.max_rel_err)
            << "\n";
        blocks.push_back({{"name", b.name}, {"max_rel_err", b.max_rel_err}});
      }
      jr["blocks"] = std::move(blocks);
      jreports.push_back(std::move(jr));
    }
  }
  if (!opt.report_out.empty()) {
    nlohmann::json j;
    j["tol"] = opt.tol;
    j["pass"] = all_pass;
    j["reports"] = std::move(jreports);
    detail::write_json_file(opt.report_out, j);
  }
  return all_pass ? kExitOk : kExitNumeric;
}

// ---- stats ----------------------------------------------------------------------

struct StatsOptions {
  std::string triplets;
  std::string tag_names;
  TagGroup group = TagGroup::kObjectAttribute;
  std::size_t top_n = 10;
  std::string report_out;
};

inline int cmd_stats(const StatsOptions& opt, std::ostream& out, std::ostream& err) {
  (void)err;
  const auto records = load_triplets(opt.triplets);
  const auto names = detail::load_names_or_empty(opt.tag_names);
  const auto stats = tag_distribution_stats(records, opt.group);
  const std::size_t n = std::min(opt.top_n, stats.size());
  nlohmann::json rows = nlohmann::json::array();
  for (std::size_t i = 0; i < n; ++i) {
    const auto [dim, mean] = stats[i];
    const std::string name = names.empty() ? std::string("dim") + std::to_string(dim)
                                           : names.at(dim);
    out << dim << "\t" << name << "\t" << format_loss(mean) << "\n";
    rows.push_back({{"dim", dim}, {"name", name}, {"mean", mean}});
  }
  if (!opt.report_out.empty()) {
    nlohmann::json j;
    j["group"] = to_string(opt.group);
    j["records"] = records.size();
    j["top"] = std::move(rows);
    detail::write_json_file(opt.report_out, j);
  }
  return kExitOk;
}

}  // namespace tagsong
