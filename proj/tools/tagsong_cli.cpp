// Command-line front end: prepare / train / eval / retrieve / gradcheck / stats.
// Flag precedence: explicit flags > --config JSON file > built-in defaults.

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tagsong/cli.hpp"

namespace {

using nlohmann::json;

// Loads --config (if present) and applies its keys before CLI11 parses the
// remaining flags, so explicit flags win.
json load_config_overlay(int argc, char** argv) {
  std::string path;
  for (int i = 1; i + 1 < argc; ++i) {
    if (std::string(argv[i]) == "--config") path = argv[i + 1];
  }
  if (path.empty()) return json::object();
  std::ifstream in(path);
  if (!in) throw tagsong::ConfigError("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw tagsong::ParseError(path + ": " + e.what());
  }
  if (!j.is_object()) throw tagsong::SchemaError(path + ": config must be a JSON object");
  return j;
}

template <typename T>
void overlay(const json& cfg, const char* key, T& value) {
  if (!cfg.contains(key)) return;
  try {
    value = cfg.at(key).get<T>();
  } catch (const json::exception& e) {
    throw tagsong::SchemaError(std::string("config key '") + key + "': " + e.what());
  }
}

void overlay_string(const json& cfg, const char* key, std::string& value) {
  overlay<std::string>(cfg, key, value);
}

struct CommonFlags {
  std::string triplets, embeddings, tag_names, split, checkpoint;
};

void add_model_flags(CLI::App* app, const json& cfg, tagsong::ModelConfig& mc,
                     std::string& model_name, std::string& tag_group, std::string& pooling) {
  model_name = tagsong::to_string(mc.kind);
  tag_group = tagsong::to_string(mc.tag_group);
  pooling = tagsong::to_string(mc.pooling);
  overlay_string(cfg, "model", model_name);
  overlay_string(cfg, "tag-group", tag_group);
  overlay_string(cfg, "pooling", pooling);
  overlay(cfg, "hidden", mc.hidden_dim);
  overlay(cfg, "attn", mc.attn_dim);
  overlay(cfg, "k-tags", mc.k_tags);
  overlay(cfg, "embedding-dim", mc.embedding_dim);
  overlay(cfg, "max-len", mc.max_len);
  overlay(cfg, "bow-cap", mc.bow_vocab_cap);
  overlay(cfg, "mlp-hidden", mc.mlp_hidden);
  overlay(cfg, "combiner-hidden", mc.combiner_hidden);
  overlay(cfg, "shared-attention", mc.shared_attention);
  app->add_option("--model", model_name,
                  "ours | ours-attention | ours-mood | bow | conse | attreader");
  app->add_option("--tag-group", tag_group, "obj | attr | obj-attr");
  app->add_option("--pooling", pooling, "average | max");
  app->add_option("--hidden", mc.hidden_dim, "LSTM hidden size per direction");
  app->add_option("--attn", mc.attn_dim, "attention size");
  app->add_option("--k-tags", mc.k_tags, "number of top tags forming the attention vector");
  app->add_option("--embedding-dim", mc.embedding_dim, "word embedding dimension");
  app->add_option("--max-len", mc.max_len, "token cap per lyric");
  app->add_option("--bow-cap", mc.bow_vocab_cap, "bag-of-words vocabulary cap");
  app->add_option("--mlp-hidden", mc.mlp_hidden, "projection hidden widths");
  app->add_option("--combiner-hidden", mc.combiner_hidden, "attreader combiner widths");
  app->add_flag("--shared-attention", mc.shared_attention,
                "share attention parameters between directions");
}

void finish_model_flags(tagsong::ModelConfig& mc, const std::string& model_name,
                        const std::string& tag_group, const std::string& pooling) {
  mc.kind = tagsong::parse_model_kind(model_name);
  mc.tag_group = tagsong::parse_tag_group(tag_group);
  mc.pooling = tagsong::parse_pooling(pooling);
}

}  // namespace

int main(int argc, char** argv) {
  return tagsong::run_guarded(
      [&]() -> int {
        const json cfg = load_config_overlay(argc, argv);

        CLI::App app{"image-to-song retrieval workbench"};
        app.require_subcommand(1);
        std::string config_path;
        app.add_option("--config", config_path, "JSON file with default flag values");

        // prepare
        auto* prepare = app.add_subcommand("prepare", "filter triplets and build a split");
        tagsong::PrepareOptions popt;
        std::string pmode = "dagger";
        overlay_string(cfg, "triplets", popt.triplets);
        overlay_string(cfg, "split", popt.split_out);
        overlay_string(cfg, "filtered", popt.filtered_out);
        overlay_string(cfg, "mode", pmode);
        overlay(cfg, "seed", popt.seed);
        overlay(cfg, "min-occurrence", popt.min_occurrence);
        overlay(cfg, "per-song", popt.per_song);
        overlay(cfg, "test-songs", popt.test_songs);
        prepare->add_option("--triplets", popt.triplets)->required();
        prepare->add_option("--split", popt.split_out, "output split file")->required();
        prepare->add_option("--filtered", popt.filtered_out, "output filtered triplets");
        prepare->add_option("--mode", pmode, "dagger | section");
        prepare->add_option("--seed", popt.seed);
        prepare->add_option("--min-occurrence", popt.min_occurrence);
        prepare->add_option("--per-song", popt.per_song, "records kept per song (0 = all)");
        prepare->add_option("--test-songs", popt.test_songs, "held-out songs (dagger)");

        // train
        auto* train = app.add_subcommand("train", "train a model and write a checkpoint");
        tagsong::TrainOptions topt;
        std::string tmodel, tgroup, tpooling, tloss = "mse";
        overlay_string(cfg, "triplets", topt.triplets);
        overlay_string(cfg, "embeddings", topt.embeddings);
        overlay_string(cfg, "tag-names", topt.tag_names);
        overlay_string(cfg, "split", topt.split);
        overlay_string(cfg, "checkpoint", topt.checkpoint_out);
        overlay_string(cfg, "resume", topt.resume);
        overlay_string(cfg, "log", topt.log_out);
        overlay_string(cfg, "loss", tloss);
        overlay(cfg, "batch", topt.train.batch_size);
        overlay(cfg, "epochs", topt.train.epochs);
        overlay(cfg, "seed", topt.train.seed);
        overlay(cfg, "learning-rate", topt.train.learning_rate);
        overlay(cfg, "rho", topt.train.rho);
        overlay(cfg, "eps", topt.train.eps);
        overlay(cfg, "clip-norm", topt.train.clip_norm);
        train->add_option("--triplets", topt.triplets)->required();
        train->add_option("--embeddings", topt.embeddings, "word2vec text file");
        train->add_option("--tag-names", topt.tag_names, "515 names, one per line");
        train->add_option("--split", topt.split)->required();
        train->add_option("--checkpoint", topt.checkpoint_out, "output checkpoint")->required();
        train->add_option("--resume", topt.resume, "checkpoint to continue from");
        train->add_option("--log", topt.log_out, "write the per-epoch TSV log here too");
        train->add_option("--loss", tloss, "mse | cpl | mrl");
        train->add_option("--batch", topt.train.batch_size);
        train->add_option("--epochs", topt.train.epochs);
        train->add_option("--seed", topt.train.seed);
        train->add_option("--learning-rate", topt.train.learning_rate);
        train->add_option("--rho", topt.train.rho);
        train->add_option("--eps", topt.train.eps);
        train->add_option("--clip-norm", topt.train.clip_norm, "0 disables clipping");
        add_model_flags(train, cfg, topt.model, tmodel, tgroup, tpooling);

        // eval
        auto* eval = app.add_subcommand("eval", "compute retrieval metrics on the test split");
        tagsong::EvalOptions eopt;
        std::string edir = "image2song";
        bool eboth = false;
        overlay_string(cfg, "triplets", eopt.triplets);
        overlay_string(cfg, "embeddings", eopt.embeddings);
        overlay_string(cfg, "tag-names", eopt.tag_names);
        overlay_string(cfg, "split", eopt.split);
        overlay_string(cfg, "checkpoint", eopt.checkpoint);
        overlay_string(cfg, "report", eopt.report_out);
        overlay_string(cfg, "direction", edir);
        overlay(cfg, "both-directions", eboth);
        eval->add_option("--triplets", eopt.triplets)->required();
        eval->add_option("--embeddings", eopt.embeddings);
        eval->add_option("--tag-names", eopt.tag_names);
        eval->add_option("--split", eopt.split)->required();
        eval->add_option("--checkpoint", eopt.checkpoint)->required();
        eval->add_option("--report", eopt.report_out, "JSON report path");
        eval->add_option("--direction", edir, "image2song | song2image");
        eval->add_flag("--both-directions", eboth, "evaluate both directions");

        // retrieve
        auto* retrieve = app.add_subcommand("retrieve", "ad-hoc query against the test gallery");
        tagsong::RetrieveOptions ropt;
        std::string rdir = "image2song";
        overlay_string(cfg, "triplets", ropt.triplets);
        overlay_string(cfg, "embeddings", ropt.embeddings);
        overlay_string(cfg, "tag-names", ropt.tag_names);
        overlay_string(cfg, "split", ropt.split);
        overlay_string(cfg, "checkpoint", ropt.checkpoint);
        overlay_string(cfg, "direction", rdir);
        overlay(cfg, "top-n", ropt.top_n);
        overlay_string(cfg, "query-tags", ropt.query_tags);
        overlay_string(cfg, "query-lyric", ropt.query_lyric);
        overlay_string(cfg, "report", ropt.report_out);
        retrieve->add_option("--triplets", ropt.triplets)->required();
        retrieve->add_option("--embeddings", ropt.embeddings);
        retrieve->add_option("--tag-names", ropt.tag_names);
        retrieve->add_option("--split", ropt.split)->required();
        retrieve->add_option("--checkpoint", ropt.checkpoint)->required();
        retrieve->add_option("--direction", rdir, "image2song | song2image");
        retrieve->add_option("--top-n", ropt.top_n);
        retrieve->add_option("--query-tags", ropt.query_tags,
                             "JSON array of 515 floats (image2song)");
        retrieve->add_option("--query-lyric", ropt.query_lyric, "lyric text file (song2image)");
        retrieve->add_option("--report", ropt.report_out, "JSON report path");

        // gradcheck
        auto* gradcheck =
            app.add_subcommand("gradcheck", "finite-difference check of every gradient");
        tagsong::GradcheckOptions gopt;
        std::vector<std::string> gkinds;
        std::string gloss = "mse";
        overlay(cfg, "models", gkinds);
        overlay_string(cfg, "loss", gloss);
        overlay(cfg, "seed", gopt.seed);
        overlay(cfg, "seeds", gopt.num_seeds);
        overlay(cfg, "tol", gopt.tol);
        overlay_string(cfg, "report", gopt.report_out);
        gradcheck->add_option("--models", gkinds, "subset of model kinds (default: all)")
            ->delimiter(',');
        gradcheck->add_option("--loss", gloss, "mse | cpl | mrl");
        gradcheck->add_option("--seed", gopt.seed);
        gradcheck->add_option("--seeds", gopt.num_seeds, "number of seeds per kind");
        gradcheck->add_option("--tol", gopt.tol);
        gradcheck->add_flag("--corrupt", gopt.corrupt,
                            "damage one analytic entry (negative control)");
        gradcheck->add_option("--report", gopt.report_out, "JSON report path");

        // stats
        auto* stats = app.add_subcommand("stats", "tag distribution over a triplet file");
        tagsong::StatsOptions sopt;
        std::string sgroup = "obj-attr";
        overlay_string(cfg, "triplets", sopt.triplets);
        overlay_string(cfg, "tag-names", sopt.tag_names);
        overlay_string(cfg, "tag-group", sgroup);
        overlay(cfg, "top-n", sopt.top_n);
        overlay_string(cfg, "report", sopt.report_out);
        stats->add_option("--triplets", sopt.triplets)->required();
        stats->add_option("--tag-names", sopt.tag_names);
        stats->add_option("--tag-group", sgroup, "obj | attr | obj-attr");
        stats->add_option("--top-n", sopt.top_n);
        stats->add_option("--report", sopt.report_out, "JSON report path");

        try {
          app.parse(argc, argv);
        } catch (const CLI::ParseError& e) {
          return app.exit(e);
        }

        if (prepare->parsed()) {
          popt.mode = tagsong::parse_split_mode(pmode);
          return tagsong::cmd_prepare(popt, std::cout, std::cerr);
        }
        if (train->parsed()) {
          finish_model_flags(topt.model, tmodel, tgroup, tpooling);
          topt.train.loss = tagsong::parse_loss_kind(tloss);
          return tagsong::cmd_train(topt, std::cout, std::cerr);
        }
        if (eval->parsed()) {
          eopt.directions = eboth ? std::vector<tagsong::Direction>{
                                        tagsong::Direction::kImage2Song,
                                        tagsong::Direction::kSong2Image}
                                  : std::vector<tagsong::Direction>{
                                        tagsong::parse_direction(edir)};
          return tagsong::cmd_eval(eopt, std::cout, std::cerr);
        }
        if (retrieve->parsed()) {
          ropt.direction = tagsong::parse_direction(rdir);
          return tagsong::cmd_retrieve(ropt, std::cout, std::cerr);
        }
        if (gradcheck->parsed()) {
          if (!gkinds.empty()) {
            gopt.kinds.clear();
            for (const auto& k : gkinds) gopt.kinds.push_back(tagsong::parse_model_kind(k));
          }
          gopt.loss = tagsong::parse_loss_kind(gloss);
          return tagsong::cmd_gradcheck(gopt, std::cout, std::cerr);
        }
        if (stats->parsed()) {
          sopt.group = tagsong::parse_tag_group(sgroup);
          return tagsong::cmd_stats(sopt, std::cout, std::cerr);
        }
        return tagsong::kExitConfig;
      },
      std::cerr);
}
