#pragma once

#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "tagsong/model.hpp"
#include "tagsong/rmsprop.hpp"

namespace tagsong {

inline constexpr const char* kCheckpointFormat = "tagsong-checkpoint";
inline constexpr int kCheckpointVersion = 1;

namespace detail {

inline nlohmann::json matrix_to_json(const Matrix& m) {
  nlohmann::json j;
  j["rows"] = m.rows();
  j["cols"] = m.cols();
  j["data"] = m.values();
  return j;
}

inline Matrix matrix_from_json(const nlohmann::json& j, const std::string& what) {
  const auto rows = j.at("rows").get<std::size_t>();
  const auto cols = j.at("cols").get<std::size_t>();
  const auto data = j.at("data").get<std::vector<double>>();
  if (data.size() != rows * cols) {
    throw SchemaError(what + ": data length " + std::to_string(data.size()) +
                      " != rows*cols " + std::to_string(rows * cols));
  }
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < data.size(); ++i) m[i] = data[i];
  return m;
}

inline nlohmann::json config_to_json(const ModelConfig& c) {
  nlohmann::json j;
  j["kind"] = to_string(c.kind);
  j["hidden_dim"] = c.hidden_dim;
  j["attn_dim"] = c.attn_dim;
  j["k_tags"] = c.k_tags;
  j["pooling"] = to_string(c.pooling);
  j["tag_group"] = to_string(c.tag_group);
  j["shared_attention"] = c.shared_attention;
  j["mlp_hidden"] = c.mlp_hidden;
  j["combiner_hidden"] = c.combiner_hidden;
  j["embedding_dim"] = c.embedding_dim;
  j["max_len"] = c.max_len;
  j["bow_vocab_cap"] = c.bow_vocab_cap;
  j["output_dim"] = c.output_dim;
  return j;
}

inline ModelConfig config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.kind = parse_model_kind(j.at("kind").get<std::string>());
  c.hidden_dim = j.at("hidden_dim").get<std::size_t>();
  c.attn_dim = j.at("attn_dim").get<std::size_t>();
  c.k_tags = j.at("k_tags").get<std::size_t>();
  c.pooling = parse_pooling(j.at("pooling").get<std::string>());
  c.tag_group = parse_tag_group(j.at("tag_group").get<std::string>());
  c.shared_attention = j.at("shared_attention").get<bool>();
  c.mlp_hidden = j.at("mlp_hidden").get<std::vector<std::size_t>>();
  c.combiner_hidden = j.at("combiner_hidden").get<std::vector<std::size_t>>();
  c.embedding_dim = j.at("embedding_dim").get<std::size_t>();
  c.max_len = j.at("max_len").get<std::size_t>();
  c.bow_vocab_cap = j.at("bow_vocab_cap").get<std::size_t>();
  c.output_dim = j.at("output_dim").get<std::size_t>();
  return c;
}

// Allocates a model skeleton with the right shapes so parameters can be
// copied in by name.
inline Model allocate_model(const ModelConfig& cfg, std::uint64_t seed,
                            const std::vector<std::string>& mood_vocab, const BowVocab& bow) {
  Model m;
  m.config = cfg;
  m.init_seed = seed;
  m.mood_vocab = mood_vocab;
  Rng rng(0);
  const std::size_t D = cfg.resolved_output_dim();
  switch (cfg.kind) {
    case ModelKind::kOurs:
      m.encoder = init_encoder(cfg.embedding_dim, cfg.hidden_dim, D, cfg.mlp_hidden, false, 0,
                               cfg.shared_attention, false, 0, rng);
      break;
    case ModelKind::kOursAttention:
      m.encoder = init_encoder(cfg.embedding_dim, cfg.hidden_dim, D, cfg.mlp_hidden, true,
                               cfg.attn_dim, cfg.shared_attention, false, 0, rng);
      break;
    case ModelKind::kOursMood:
      m.encoder = init_encoder(cfg.embedding_dim, cfg.hidden_dim, D, cfg.mlp_hidden, false, 0,
                               cfg.shared_attention, true, mood_vocab.size(), rng);
      break;
    case ModelKind::kBow:
      m.bow_vocab = bow;
      m.bow = MlpParams::create({bow.size(), D}, true, rng);
      break;
    case ModelKind::kConse: {
      std::vector<std::size_t> dims;
      dims.push_back(cfg.embedding_dim);
      for (std::size_t h : cfg.mlp_hidden) dims.push_back(h);
      dims.push_back(D);
      m.conse = MlpParams::create(dims, false, rng);
      break;
    }
    case ModelKind::kAttReader:
      m.attreader = AttReaderParams::create(cfg.embedding_dim, cfg.hidden_dim, cfg.attn_dim, D,
                                            cfg.combiner_hidden, rng);
      break;
  }
  return m;
}

}  // namespace detail

struct Checkpoint {
  Model model;
  std::map<std::string, Matrix> opt_state;
  std::size_t epochs_done = 0;
  double final_loss = 0.0;
  std::uint64_t seed = 0;
};

// JSON container: every parameter with shape metadata, the model config,
// the seed, optimizer accumulators, and training progress. Serialization is
// deterministic (sorted keys, shortest round-trip numbers), so identical
// states produce identical bytes and a save/load cycle is bit-exact.
inline void save_checkpoint(const std::string& path, const Model& model, const Rmsprop& opt,
                            std::size_t epochs_done, double final_loss) {
  nlohmann::json j;
  j["format"] = kCheckpointFormat;
  j["version"] = kCheckpointVersion;
  j["config"] = detail::config_to_json(model.config);
  j["seed"] = model.init_seed;
  j["epochs_done"] = epochs_done;
  j["final_loss"] = final_loss;
  j["mood_vocab"] = model.mood_vocab;
  if (model.config.kind == ModelKind::kBow) {
    j["bow_vocab"] = {{"words", model.bow_vocab.words}, {"idf", model.bow_vocab.idf}};
  }
  nlohmann::json params = nlohmann::json::object();
  for_each_model_param(model, [&](const std::string& name, const Matrix& m) {
    params[name] = detail::matrix_to_json(m);
  });
  j["params"] = std::move(params);
  nlohmann::json opt_state = nlohmann::json::object();
  for (const auto& [name, acc] : opt.state()) {
    opt_state[name] = detail::matrix_to_json(acc);
  }
  j["opt"] = std::move(opt_state);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw ParseError("save_checkpoint: cannot open " + path + " for writing");
  out << j.dump(1) << "\n";
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ParseError("load_checkpoint: cannot open " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(path + ": " + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat) {
      throw SchemaError(path + ": not a checkpoint file");
    }
    if (j.at("version").get<int>() != kCheckpointVersion) {
      throw SchemaError(path + ": unsupported checkpoint version");
    }
    Checkpoint ck;
    const ModelConfig cfg = detail::config_from_json(j.at("config"));
    ck.seed = j.at("seed").get<std::uint64_t>();
    ck.epochs_done = j.at("epochs_done").get<std::size_t>();
    ck.final_loss = j.at("final_loss").get<double>();
    const auto mood_vocab = j.at("mood_vocab").get<std::vector<std::string>>();
    BowVocab bow;
    if (cfg.kind == ModelKind::kBow) {
      const auto& bj = j.at("bow_vocab");
      bow.words = bj.at("words").get<std::vector<std::string>>();
      bow.idf = bj.at("idf").get<std::vector<double>>();
      if (bow.idf.size() != bow.words.size()) {
        throw SchemaError(path + ": bow vocab words/idf length mismatch");
      }
      for (std::size_t i = 0; i < bow.words.size(); ++i) bow.index[bow.words[i]] = i;
    }
    ck.model = detail::allocate_model(cfg, ck.seed, mood_vocab, bow);
    const auto& params = j.at("params");
    std::size_t seen = 0;
    for_each_model_param(ck.model, [&](const std::string& name, Matrix& m) {
      if (!params.contains(name)) {
        throw SchemaError(path + ": missing parameter '" + name + "'");
      }
      Matrix loaded = detail::matrix_from_json(params.at(name), name);
      if (!loaded.same_shape(m)) {
        throw SchemaError(path + ": parameter '" + name + "' has unexpected shape");
      }
      m = std::move(loaded);
      ++seen;
    });
    if (seen != params.size()) {
      throw SchemaError(path + ": checkpoint holds " + std::to_string(params.size()) +
                        " parameters, model expects " + std::to_string(seen));
    }
    for (const auto& [name, acc] : j.at("opt").items()) {
      ck.opt_state[name] = detail::matrix_from_json(acc, "opt." + name);
    }
    return ck;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(path + ": " + e.what());
  }
}

}  // namespace tagsong
