#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <string>
#include <vector>

#include "tagsong/encoder.hpp"
#include "tagsong/errors.hpp"
#include "tagsong/matrix.hpp"

namespace tagsong {

// ---- Bag-of-words ----------------------------------------------------------

struct BowVocab {
  std::vector<std::string> words;            // slot -> word
  std::map<std::string, std::size_t> index;  // word -> slot
  std::vector<double> idf;                   // ln(N / df)

  std::size_t size() const { return words.size(); }
};

// Document frequency over the train lyrics, keeping the `cap` most frequent
// words (ties toward lexicographically smaller). Slots are ordered by the
// same rule so the layout is deterministic.
inline BowVocab build_bow_vocab(const std::vector<std::vector<std::string>>& docs,
                                std::size_t cap = 5000) {
  if (docs.empty()) throw ParameterError("build_bow_vocab: no documents");
  if (cap == 0) throw ParameterError("build_bow_vocab: cap must be positive");
  std::map<std::string, std::size_t> df;
  for (const auto& doc : docs) {
    std::set<std::string> seen(doc.begin(), doc.end());
    for (const auto& w : seen) ++df[w];
  }
  std::vector<std::pair<std::string, std::size_t>> order(df.begin(), df.end());
  std::sort(order.begin(), order.end(), [](const auto& a, const auto& b) {
    if (a.second != b.second) return a.second > b.second;
    return a.first < b.first;
  });
  if (order.size() > cap) order.resize(cap);
  BowVocab v;
  const double n = static_cast<double>(docs.size());
  for (const auto& [word, count] : order) {
    v.index[word] = v.words.size();
    v.words.push_back(word);
    v.idf.push_back(std::log(n / static_cast<double>(count)));
  }
  return v;
}

// tf-idf features: raw in-document count times idf. Words outside the
// vocabulary are ignored; a lyric sharing no word with it is unusable.
inline Matrix bow_features(const std::vector<std::string>& tokens, const BowVocab& vocab) {
  Matrix out(vocab.size(), 1);
  std::size_t hits = 0;
  for (const auto& w : tokens) {
    auto it = vocab.index.find(w);
    if (it == vocab.index.end()) continue;
    out[it->second] += 1.0;
    ++hits;
  }
  if (hits == 0) throw EmptyLyricError("bow_features: no token overlaps the vocabulary");
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= vocab.idf[i];
  return out;
}

// ---- CONSE-style pooling ---------------------------------------------------

// Column-wise average of the word embeddings; order-invariant by design.
inline Matrix conse_encode(const Matrix& embedded) {
  if (embedded.rows() == 0) throw EmptyLyricError("conse_encode: no tokens");
  Matrix out(embedded.cols(), 1);
  for (std::size_t r = 0; r < embedded.rows(); ++r)
    for (std::size_t c = 0; c < embedded.cols(); ++c) out[c] += embedded(r, c);
  for (std::size_t c = 0; c < out.size(); ++c) out[c] /= static_cast<double>(embedded.rows());
  return out;
}

// ---- Attentive reader ------------------------------------------------------

// Plain bi-LSTM; the tag attention plays the role of the reader's question.
// Per position, y_t stacks the two directions' outputs (2H); the attention
// scores are softmax-normalized over time (well-defined here because pooling
// happens after the whole sequence is read), and the pooled vector is scored
// against the image tag vector by a small combiner network.
struct AttReaderParams {
  std::size_t input_dim = 300;
  std::size_t hidden_dim = 128;
  std::size_t attn_dim = 128;
  LstmParams fwd, bwd;
  AttentionParams attn;  // W_hm: M x 2H, W_vm: M x E, w_ms: M x 1
  MlpParams combiner;    // (D + 2H) -> hidden -> 1, linear output

  static AttReaderParams create(std::size_t input, std::size_t hidden, std::size_t attn,
                                std::size_t tag_dim, const std::vector<std::size_t>& comb_hidden,
                                Rng& rng) {
    AttReaderParams p;
    p.input_dim = input;
    p.hidden_dim = hidden;
    p.attn_dim = attn;
    p.fwd = LstmParams::create(hidden, input, rng);
    p.bwd = LstmParams::create(hidden, input, rng);
    p.attn = AttentionParams::create(attn, 2 * hidden, input, rng);
    std::vector<std::size_t> dims;
    dims.push_back(tag_dim + 2 * hidden);
    for (std::size_t h : comb_hidden) dims.push_back(h);
    dims.push_back(1);
    p.combiner = MlpParams::create(dims, /*linear_output=*/true, rng);
    return p;
  }

  static AttReaderParams zeros_like(const AttReaderParams& o) {
    AttReaderParams p;
    p.input_dim = o.input_dim;
    p.hidden_dim = o.hidden_dim;
    p.attn_dim = o.attn_dim;
    p.fwd = LstmParams::zeros(o.hidden_dim, o.input_dim);
    p.bwd = LstmParams::zeros(o.hidden_dim, o.input_dim);
    p.attn = AttentionParams::zeros(o.attn_dim, 2 * o.hidden_dim, o.input_dim);
    p.combiner = MlpParams::zeros_like(o.combiner);
    return p;
  }
};

template <typename P, typename F>
void for_each_attreader_param(P& p, F&& f) {
  for_each_lstm_param(p.fwd, "ar_fwd", f);
  for_each_lstm_param(p.bwd, "ar_bwd", f);
  for_each_attention_param(p.attn, "ar_attn", f);
  for_each_mlp_param(p.combiner, "ar_comb", f);
}

struct AttReaderCache {
  DirectionCache fwd, bwd;
  std::vector<Matrix> y;  // per position, 2H
  std::vector<Matrix> m;  // per position, M
  std::vector<double> s;  // softmax weights over time
  Matrix vtilde;
  Matrix pooled;
};

inline Matrix attreader_encode(const AttReaderParams& p, const Matrix& embedded,
                               const Matrix& vtilde, AttReaderCache* cache = nullptr) {
  if (embedded.rows() == 0) throw EmptyLyricError("attreader_encode: no tokens");
  AttReaderCache local;
  AttReaderCache& c = cache ? *cache : local;
  detail::run_direction(p.fwd, nullptr, embedded, /*reverse=*/false, nullptr, &c.fwd);
  detail::run_direction(p.bwd, nullptr, embedded, /*reverse=*/true, nullptr, &c.bwd);
  const std::size_t T = embedded.rows();
  c.y.clear();
  c.m.clear();
  c.s.clear();
  std::vector<double> e(T);
  for (std::size_t t = 0; t < T; ++t) {
    Matrix y = vstack(c.fwd.steps[t].h, c.bwd.steps[T - 1 - t].h);
    Matrix m = sigmoid(add(matmul(p.attn.W_hm, y), matmul(p.attn.W_vm, vtilde)));
    e[t] = dot(p.attn.w_ms, m);
    c.y.push_back(std::move(y));
    c.m.push_back(std::move(m));
  }
  const double emax = *std::max_element(e.begin(), e.end());
  double z = 0.0;
  for (double& v : e) {
    v = std::exp(v - emax);
    z += v;
  }
  Matrix pooled(2 * p.hidden_dim, 1);
  for (std::size_t t = 0; t < T; ++t) {
    const double s = e[t] / z;
    c.s.push_back(s);
    add_in_place(pooled, c.y[t], s);
  }
  c.vtilde = vtilde;
  c.pooled = pooled;
  return pooled;
}

struct AttReaderScoreCache {
  AttReaderCache enc;
  MlpCache comb;
  Matrix comb_in;
};

// Relevance score of an (image tags, lyric) pair.
inline double attreader_score(const AttReaderParams& p, const Matrix& tag_vec,
                              const Matrix& embedded, const Matrix& vtilde,
                              AttReaderScoreCache* cache = nullptr) {
  AttReaderScoreCache local;
  AttReaderScoreCache& c = cache ? *cache : local;
  Matrix pooled = attreader_encode(p, embedded, vtilde, &c.enc);
  c.comb_in = vstack(tag_vec, pooled);
  Matrix out = mlp_forward(p.combiner, c.comb_in, &c.comb);
  return out[0];
}

// Backward of the score w.r.t. every attreader parameter; the image tag
// vector and v~ are fixed inputs.
inline void attreader_backward(const AttReaderParams& p, const AttReaderScoreCache& cache,
                               double d_score, AttReaderParams& g) {
  Matrix d_out(1, 1);
  d_out[0] = d_score;
  Matrix d_in = mlp_backward(p.combiner, cache.comb, d_out, g.combiner);
  const std::size_t D = cache.comb_in.rows() - 2 * p.hidden_dim;
  Matrix d_pooled = slice(d_in, D, cache.comb_in.rows());

  const AttReaderCache& enc = cache.enc;
  const std::size_t T = enc.y.size();
  std::vector<double> d_s(T);
  double sum_sd = 0.0;
  for (std::size_t t = 0; t < T; ++t) {
    d_s[t] = dot(d_pooled, enc.y[t]);
    sum_sd += enc.s[t] * d_s[t];
  }
  std::vector<Matrix> d_fwd_steps(T), d_bwd_steps(T);
  const std::size_t H = p.hidden_dim;
  for (std::size_t t = 0; t < T; ++t) {
    const double d_e = enc.s[t] * (d_s[t] - sum_sd);
    add_in_place(g.attn.w_ms, enc.m[t], d_e);
    Matrix d_am = scaled(p.attn.w_ms, d_e);
    for (std::size_t i = 0; i < d_am.size(); ++i) d_am[i] *= enc.m[t][i] * (1.0 - enc.m[t][i]);
    add_outer(g.attn.W_hm, d_am, enc.y[t]);
    add_outer(g.attn.W_vm, d_am, enc.vtilde);
    Matrix d_y(2 * H, 1);
    add_in_place(d_y, d_pooled, enc.s[t]);
    add_tmatvec(d_y, p.attn.W_hm, d_am);
    d_fwd_steps[t] = slice(d_y, 0, H);
    d_bwd_steps[T - 1 - t] = slice(d_y, H, 2 * H);
  }
  const Matrix zero(H, 1);
  detail::direction_backward(p.fwd, nullptr, enc.fwd, nullptr, zero, g.fwd, nullptr,
                             &d_fwd_steps);
  detail::direction_backward(p.bwd, nullptr, enc.bwd, nullptr, zero, g.bwd, nullptr,
                             &d_bwd_steps);
}

}  // namespace tagsong
