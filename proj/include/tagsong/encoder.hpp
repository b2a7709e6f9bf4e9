#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tagsong/dataset.hpp"
#include "tagsong/errors.hpp"
#include "tagsong/matrix.hpp"
#include "tagsong/rng.hpp"
#include "tagsong/text.hpp"

namespace tagsong {

inline Matrix glorot(std::size_t rows, std::size_t cols, Rng& rng) {
  const double r = std::sqrt(6.0 / static_cast<double>(rows + cols));
  Matrix m(rows, cols);
  for (std::size_t i = 0; i < m.size(); ++i) m[i] = rng.next_uniform(-r, r);
  return m;
}

// One direction of the recurrent encoder. W_*: H x E, U_*: H x H, b_*: H x 1.
struct LstmParams {
  Matrix W_i, U_i, b_i;
  Matrix W_f, U_f, b_f;
  Matrix W_c, U_c, b_c;
  Matrix W_o, U_o, b_o;

  static LstmParams create(std::size_t hidden, std::size_t input, Rng& rng) {
    LstmParams p;
    p.W_i = glorot(hidden, input, rng);
    p.U_i = glorot(hidden, hidden, rng);
    p.b_i = Matrix(hidden, 1);
    p.W_f = glorot(hidden, input, rng);
    p.U_f = glorot(hidden, hidden, rng);
    p.b_f = Matrix(hidden, 1, 1.0);  // forget bias starts open
    p.W_c = glorot(hidden, input, rng);
    p.U_c = glorot(hidden, hidden, rng);
    p.b_c = Matrix(hidden, 1);
    p.W_o = glorot(hidden, input, rng);
    p.U_o = glorot(hidden, hidden, rng);
    p.b_o = Matrix(hidden, 1);
    return p;
  }

  static LstmParams zeros(std::size_t hidden, std::size_t input) {
    LstmParams p;
    p.W_i = Matrix(hidden, input);
    p.U_i = Matrix(hidden, hidden);
    p.b_i = Matrix(hidden, 1);
    p.W_f = p.W_i;
    p.U_f = p.U_i;
    p.b_f = p.b_i;
    p.W_c = p.W_i;
    p.U_c = p.U_i;
    p.b_c = p.b_i;
    p.W_o = p.W_i;
    p.U_o = p.U_i;
    p.b_o = p.b_i;
    return p;
  }
};

template <typename P, typename F>
void for_each_lstm_param(P& p, const std::string& prefix, F&& f) {
  f(prefix + ".W_i", p.W_i);
  f(prefix + ".U_i", p.U_i);
  f(prefix + ".b_i", p.b_i);
  f(prefix + ".W_f", p.W_f);
  f(prefix + ".U_f", p.U_f);
  f(prefix + ".b_f", p.b_f);
  f(prefix + ".W_c", p.W_c);
  f(prefix + ".U_c", p.U_c);
  f(prefix + ".b_c", p.b_c);
  f(prefix + ".W_o", p.W_o);
  f(prefix + ".U_o", p.U_o);
  f(prefix + ".b_o", p.b_o);
}

struct LstmStepCache {
  Matrix x, h_prev, c_prev;
  Matrix i, f, ctilde, c, o, tanh_c, h;
};

// i = sig(W_i x + U_i h + b_i)        f = sig(W_f x + U_f h + b_f)
// c~ = tanh(W_c x + U_c h + b_c)      o = sig(W_o x + U_o h + b_o)
// c = i*c~ + f*c_prev                 h = o * tanh(c)
inline std::pair<Matrix, Matrix> lstm_step(const LstmParams& p, const Matrix& x,
                                           const Matrix& h_prev, const Matrix& c_prev,
                                           LstmStepCache* cache = nullptr) {
  Matrix i = sigmoid(add(add(matmul(p.W_i, x), matmul(p.U_i, h_prev)), p.b_i));
  Matrix f = sigmoid(add(add(matmul(p.W_f, x), matmul(p.U_f, h_prev)), p.b_f));
  Matrix ctilde = tanh(add(add(matmul(p.W_c, x), matmul(p.U_c, h_prev)), p.b_c));
  Matrix o = sigmoid(add(add(matmul(p.W_o, x), matmul(p.U_o, h_prev)), p.b_o));
  Matrix c = add(hadamard(i, ctilde), hadamard(f, c_prev));
  Matrix tc = tanh(c);
  Matrix h = hadamard(o, tc);
  if (cache) {
    cache->x = x;
    cache->h_prev = h_prev;
    cache->c_prev = c_prev;
    cache->i = std::move(i);
    cache->f = std::move(f);
    cache->ctilde = std::move(ctilde);
    cache->o = std::move(o);
    cache->c = c;
    cache->tanh_c = std::move(tc);
    cache->h = h;
  }
  return {std::move(h), std::move(c)};
}

// Gate that scales a hidden state by how well it matches the image tags.
// W_hm: A x H, W_vm: A x E, w_ms: A x 1.
struct AttentionParams {
  Matrix W_hm, W_vm, w_ms;

  static AttentionParams create(std::size_t attn, std::size_t hidden, std::size_t embed,
                                Rng& rng) {
    AttentionParams p;
    p.W_hm = glorot(attn, hidden, rng);
    p.W_vm = glorot(attn, embed, rng);
    p.w_ms = glorot(attn, 1, rng);
    return p;
  }

  static AttentionParams zeros(std::size_t attn, std::size_t hidden, std::size_t embed) {
    AttentionParams p;
    p.W_hm = Matrix(attn, hidden);
    p.W_vm = Matrix(attn, embed);
    p.w_ms = Matrix(attn, 1);
    return p;
  }

  bool empty() const { return W_hm.empty(); }
};

template <typename P, typename F>
void for_each_attention_param(P& p, const std::string& prefix, F&& f) {
  f(prefix + ".W_hm", p.W_hm);
  f(prefix + ".W_vm", p.W_vm);
  f(prefix + ".w_ms", p.w_ms);
}

struct AttentionStepCache {
  Matrix m;
  double z = 0.0;
  double s = 0.0;
  Matrix hfeed;
};

// m = sig(W_hm h + W_vm v~),  s = sig(w_ms . m),  h~ = s * h.
inline std::pair<Matrix, double> attention_gate(const AttentionParams& p, const Matrix& h,
                                                const Matrix& vtilde,
                                                AttentionStepCache* cache = nullptr) {
  Matrix m = sigmoid(add(matmul(p.W_hm, h), matmul(p.W_vm, vtilde)));
  const double z = dot(p.w_ms, m);
  const double s = sigmoid(z);
  Matrix out = scaled(h, s);
  if (cache) {
    cache->m = std::move(m);
    cache->z = z;
    cache->s = s;
    cache->hfeed = out;
  }
  return {std::move(out), s};
}

enum class Pooling { kAverage, kMax };

inline std::string to_string(Pooling p) { return p == Pooling::kAverage ? "average" : "max"; }

inline Pooling parse_pooling(const std::string& s) {
  if (s == "average") return Pooling::kAverage;
  if (s == "max") return Pooling::kMax;
  throw ConfigError("unknown pooling '" + s + "' (expected average or max)");
}

// Indices of the k most probable tags inside the group, by probability
// descending with ties broken toward the lower index. Indices are absolute
// positions in the 515-dim layout.
inline std::vector<std::size_t> top_k_tags(const std::vector<double>& tags, TagGroup group,
                                           std::size_t k) {
  if (tags.size() != kTagDim) throw ShapeError("top_k_tags: tag vector must have 515 entries");
  if (k == 0) throw ParameterError("top_k_tags: k must be positive");
  auto [b, e] = tag_group_range(group);
  if (k > e - b) {
    throw ParameterError("top_k_tags: k = " + std::to_string(k) + " exceeds the " +
                         std::to_string(e - b) + " dimensions of the group");
  }
  std::vector<std::size_t> idx;
  idx.reserve(e - b);
  for (std::size_t i = b; i < e; ++i) idx.push_back(i);
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t c) {
    if (tags[a] != tags[c]) return tags[a] > tags[c];
    return a < c;
  });
  idx.resize(k);
  return idx;
}

// Mean of the in-vocabulary word vectors of a (possibly multi-word) tag name.
// A name with no known words maps to the zero vector.
inline Matrix embed_tag_name(const std::string& name, const EmbeddingTable& table) {
  Matrix sum(table.dim(), 1);
  std::size_t hits = 0;
  for (const auto& word : tokenize(name)) {
    if (auto id = table.lookup(word)) {
      add_in_place(sum, table.row(*id));
      ++hits;
    }
  }
  if (hits > 1) {
    for (std::size_t i = 0; i < sum.size(); ++i) sum[i] /= static_cast<double>(hits);
  }
  return sum;
}

// Embeds the image's k strongest tags and pools them column-wise into a
// single vector that conditions the attention gate.
inline Matrix tag_attention_vector(const std::vector<double>& tags,
                                   const std::vector<std::string>& tag_names, TagGroup group,
                                   std::size_t k, Pooling pooling, const EmbeddingTable& table) {
  if (tag_names.size() != kTagDim) {
    throw ShapeError("tag_attention_vector: need 515 tag names");
  }
  const auto top = top_k_tags(tags, group, k);
  std::vector<Matrix> rows;
  rows.reserve(top.size());
  for (std::size_t t : top) rows.push_back(embed_tag_name(tag_names[t], table));
  Matrix out(table.dim(), 1);
  if (pooling == Pooling::kAverage) {
    for (const auto& r : rows) add_in_place(out, r);
    for (std::size_t i = 0; i < out.size(); ++i) out[i] /= static_cast<double>(rows.size());
  } else {
    for (std::size_t i = 0; i < out.size(); ++i) {
      double best = rows[0][i];
      for (std::size_t r = 1; r < rows.size(); ++r) best = std::max(best, rows[r][i]);
      out[i] = best;
    }
  }
  return out;
}

// Feed-forward stack: tanh on hidden layers, sigmoid on the last layer
// (linear when linear_output is set, used by scoring heads).
struct MlpParams {
  std::vector<Matrix> W;
  std::vector<Matrix> b;
  bool linear_output = false;

  // dims = {in, hidden..., out}
  static MlpParams create(const std::vector<std::size_t>& dims, bool linear_output, Rng& rng) {
    if (dims.size() < 2) throw ParameterError("MlpParams: need at least input and output dims");
    MlpParams p;
    p.linear_output = linear_output;
    for (std::size_t k = 0; k + 1 < dims.size(); ++k) {
      p.W.push_back(glorot(dims[k + 1], dims[k], rng));
      p.b.push_back(Matrix(dims[k + 1], 1));
    }
    return p;
  }

  static MlpParams zeros_like(const MlpParams& other) {
    MlpParams p;
    p.linear_output = other.linear_output;
    for (std::size_t k = 0; k < other.W.size(); ++k) {
      p.W.push_back(Matrix(other.W[k].rows(), other.W[k].cols()));
      p.b.push_back(Matrix(other.b[k].rows(), 1));
    }
    return p;
  }

  std::size_t input_dim() const { return W.empty() ? 0 : W.front().cols(); }
  std::size_t output_dim() const { return W.empty() ? 0 : W.back().rows(); }
};

template <typename P, typename F>
void for_each_mlp_param(P& p, const std::string& prefix, F&& f) {
  for (std::size_t k = 0; k < p.W.size(); ++k) {
    f(prefix + ".W" + std::to_string(k), p.W[k]);
    f(prefix + ".b" + std::to_string(k), p.b[k]);
  }
}

struct MlpCache {
  std::vector<Matrix> inputs;   // input to each layer
  std::vector<Matrix> outputs;  // activated output of each layer
};

inline Matrix mlp_forward(const MlpParams& p, const Matrix& in, MlpCache* cache = nullptr) {
  if (cache) {
    cache->inputs.clear();
    cache->outputs.clear();
  }
  Matrix cur = in;
  for (std::size_t k = 0; k < p.W.size(); ++k) {
    if (cache) cache->inputs.push_back(cur);
    Matrix a = add(matmul(p.W[k], cur), p.b[k]);
    const bool last = k + 1 == p.W.size();
    if (!last) {
      cur = tanh(a);
    } else if (p.linear_output) {
      cur = std::move(a);
    } else {
      cur = sigmoid(a);
    }
    if (cache) cache->outputs.push_back(cur);
  }
  return cur;
}

// Returns the gradient w.r.t. the input; parameter gradients accumulate in g.
inline Matrix mlp_backward(const MlpParams& p, const MlpCache& cache, const Matrix& d_out,
                           MlpParams& g) {
  Matrix d = d_out;
  for (std::size_t k = p.W.size(); k-- > 0;) {
    const Matrix& out = cache.outputs[k];
    const bool last = k + 1 == p.W.size();
    Matrix d_a = d;
    if (!last) {
      for (std::size_t i = 0; i < d_a.size(); ++i) d_a[i] *= 1.0 - out[i] * out[i];
    } else if (!p.linear_output) {
      for (std::size_t i = 0; i < d_a.size(); ++i) d_a[i] *= out[i] * (1.0 - out[i]);
    }
    add_outer(g.W[k], d_a, cache.inputs[k]);
    add_in_place(g.b[k], d_a);
    Matrix d_in(cache.inputs[k].rows(), 1);
    add_tmatvec(d_in, p.W[k], d_a);
    d = std::move(d_in);
  }
  return d;
}

// Full lyric encoder: a bi-directional LSTM whose per-step outputs may be
// scaled by the tag-conditioned gate before feeding the next step, followed
// by a feed-forward projection into tag space. Gradient containers reuse
// this struct with every matrix zeroed.
struct EncoderParams {
  std::size_t input_dim = 300;
  std::size_t hidden_dim = 128;
  std::size_t attn_dim = 0;
  bool attention = false;
  bool shared_attention = false;  // separate per direction unless configured otherwise
  bool mood = false;
  LstmParams fwd, bwd;
  AttentionParams attn_fwd, attn_bwd;  // attn_bwd unused when shared
  Matrix mood_table;                   // one row per known mood label
  MlpParams proj;
};

inline EncoderParams init_encoder(std::size_t input_dim, std::size_t hidden_dim,
                                  std::size_t output_dim,
                                  const std::vector<std::size_t>& mlp_hidden, bool attention,
                                  std::size_t attn_dim, bool shared_attention, bool mood,
                                  std::size_t mood_vocab, Rng& rng) {
  EncoderParams p;
  p.input_dim = input_dim;
  p.hidden_dim = hidden_dim;
  p.attention = attention;
  p.attn_dim = attention ? attn_dim : 0;
  p.shared_attention = shared_attention;
  p.mood = mood;
  p.fwd = LstmParams::create(hidden_dim, input_dim, rng);
  p.bwd = LstmParams::create(hidden_dim, input_dim, rng);
  if (attention) {
    if (attn_dim == 0) throw ParameterError("init_encoder: attention needs attn_dim > 0");
    p.attn_fwd = AttentionParams::create(attn_dim, hidden_dim, input_dim, rng);
    if (!shared_attention) {
      p.attn_bwd = AttentionParams::create(attn_dim, hidden_dim, input_dim, rng);
    }
  }
  if (mood) p.mood_table = glorot(mood_vocab, input_dim, rng);
  std::vector<std::size_t> dims;
  dims.push_back(2 * hidden_dim + (mood ? input_dim : 0));
  for (std::size_t h : mlp_hidden) dims.push_back(h);
  dims.push_back(output_dim);
  p.proj = MlpParams::create(dims, /*linear_output=*/false, rng);
  return p;
}

inline EncoderParams zeros_like(const EncoderParams& o) {
  EncoderParams p;
  p.input_dim = o.input_dim;
  p.hidden_dim = o.hidden_dim;
  p.attn_dim = o.attn_dim;
  p.attention = o.attention;
  p.shared_attention = o.shared_attention;
  p.mood = o.mood;
  p.fwd = LstmParams::zeros(o.hidden_dim, o.input_dim);
  p.bwd = LstmParams::zeros(o.hidden_dim, o.input_dim);
  if (o.attention) {
    p.attn_fwd = AttentionParams::zeros(o.attn_dim, o.hidden_dim, o.input_dim);
    if (!o.shared_attention) {
      p.attn_bwd = AttentionParams::zeros(o.attn_dim, o.hidden_dim, o.input_dim);
    }
  }
  if (o.mood) p.mood_table = Matrix(o.mood_table.rows(), o.mood_table.cols());
  p.proj = MlpParams::zeros_like(o.proj);
  return p;
}

template <typename P, typename F>
void for_each_encoder_param(P& p, F&& f) {
  for_each_lstm_param(p.fwd, "lstm_fwd", f);
  for_each_lstm_param(p.bwd, "lstm_bwd", f);
  if (p.attention) {
    if (p.shared_attention) {
      for_each_attention_param(p.attn_fwd, "attn", f);
    } else {
      for_each_attention_param(p.attn_fwd, "attn_fwd", f);
      for_each_attention_param(p.attn_bwd, "attn_bwd", f);
    }
  }
  if (p.mood) f(std::string("mood.table"), p.mood_table);
  for_each_mlp_param(p.proj, "proj", f);
}

struct DirectionCache {
  std::vector<LstmStepCache> steps;   // in processing order
  std::vector<AttentionStepCache> attn;
};

struct EncodeCache {
  DirectionCache fwd, bwd;
  Matrix vtilde;  // empty when attention is off
  Matrix rep;     // concatenated 2H representation
};

namespace detail {

// Runs one direction over the embedded tokens (rows of `embedded`) in the
// given positional order. Returns the direction's final (gated) output.
inline Matrix run_direction(const LstmParams& lp, const AttentionParams* ap,
                            const Matrix& embedded, bool reverse, const Matrix* vtilde,
                            DirectionCache* cache) {
  const std::size_t T = embedded.rows();
  const std::size_t H = lp.b_i.rows();
  Matrix h(H, 1), c(H, 1);
  Matrix x(embedded.cols(), 1);
  if (cache) {
    cache->steps.clear();
    cache->attn.clear();
    cache->steps.reserve(T);
    if (ap) cache->attn.reserve(T);
  }
  for (std::size_t k = 0; k < T; ++k) {
    const std::size_t pos = reverse ? T - 1 - k : k;
    for (std::size_t j = 0; j < embedded.cols(); ++j) x[j] = embedded(pos, j);
    LstmStepCache sc;
    auto [h_raw, c_next] = lstm_step(lp, x, h, c, cache ? &sc : nullptr);
    c = std::move(c_next);
    if (ap) {
      AttentionStepCache acs;
      h = attention_gate(*ap, h_raw, *vtilde, cache ? &acs : nullptr).first;
      if (cache) cache->attn.push_back(std::move(acs));
    } else {
      h = std::move(h_raw);
    }
    if (cache) cache->steps.push_back(std::move(sc));
  }
  return h;
}

// Backward through one direction. d_final is the gradient on the direction's
// final output; d_step_outputs (optional, indexed in processing order) adds a
// gradient on every step's output, which pooling heads need. Grads accumulate
// into g_lstm / g_attn.
inline void direction_backward(const LstmParams& lp, const AttentionParams* ap,
                               const DirectionCache& cache, const Matrix* vtilde,
                               const Matrix& d_final, LstmParams& g_lstm,
                               AttentionParams* g_attn,
                               const std::vector<Matrix>* d_step_outputs = nullptr) {
  const std::size_t T = cache.steps.size();
  const std::size_t H = lp.b_i.rows();
  Matrix d_hfeed = d_final;     // grad on the (gated) output of the current step
  Matrix d_c(H, 1);             // grad carried into c_t from step t+1
  for (std::size_t k = T; k-- > 0;) {
    const LstmStepCache& sc = cache.steps[k];
    if (d_step_outputs) add_in_place(d_hfeed, (*d_step_outputs)[k]);
    Matrix d_h(H, 1);
    if (ap) {
      const AttentionStepCache& acs = cache.attn[k];
      const double d_s = dot(d_hfeed, sc.h);
      d_h = scaled(d_hfeed, acs.s);
      const double d_z = d_s * acs.s * (1.0 - acs.s);
      add_in_place(g_attn->w_ms, acs.m, d_z);
      Matrix d_am = scaled(ap->w_ms, d_z);
      for (std::size_t i = 0; i < d_am.size(); ++i) {
        d_am[i] *= acs.m[i] * (1.0 - acs.m[i]);
      }
      add_outer(g_attn->W_hm, d_am, sc.h);
      add_outer(g_attn->W_vm, d_am, *vtilde);
      add_tmatvec(d_h, ap->W_hm, d_am);
    } else {
      d_h = d_hfeed;
    }
    // cell backward
    for (std::size_t i = 0; i < H; ++i) {
      d_c[i] += d_h[i] * sc.o[i] * (1.0 - sc.tanh_c[i] * sc.tanh_c[i]);
    }
    Matrix d_ai(H, 1), d_af(H, 1), d_ac(H, 1), d_ao(H, 1);
    for (std::size_t i = 0; i < H; ++i) {
      d_ao[i] = d_h[i] * sc.tanh_c[i] * sc.o[i] * (1.0 - sc.o[i]);
      d_ai[i] = d_c[i] * sc.ctilde[i] * sc.i[i] * (1.0 - sc.i[i]);
      d_af[i] = d_c[i] * sc.c_prev[i] * sc.f[i] * (1.0 - sc.f[i]);
      d_ac[i] = d_c[i] * sc.i[i] * (1.0 - sc.ctilde[i] * sc.ctilde[i]);
    }
    add_outer(g_lstm.W_i, d_ai, sc.x);
    add_outer(g_lstm.U_i, d_ai, sc.h_prev);
    add_in_place(g_lstm.b_i, d_ai);
    add_outer(g_lstm.W_f, d_af, sc.x);
    add_outer(g_lstm.U_f, d_af, sc.h_prev);
    add_in_place(g_lstm.b_f, d_af);
    add_outer(g_lstm.W_c, d_ac, sc.x);
    add_outer(g_lstm.U_c, d_ac, sc.h_prev);
    add_in_place(g_lstm.b_c, d_ac);
    add_outer(g_lstm.W_o, d_ao, sc.x);
    add_outer(g_lstm.U_o, d_ao, sc.h_prev);
    add_in_place(g_lstm.b_o, d_ao);
    Matrix d_prev(H, 1);
    add_tmatvec(d_prev, lp.U_i, d_ai);
    add_tmatvec(d_prev, lp.U_f, d_af);
    add_tmatvec(d_prev, lp.U_c, d_ac);
    add_tmatvec(d_prev, lp.U_o, d_ao);
    d_hfeed = std::move(d_prev);
    for (std::size_t i = 0; i < H; ++i) d_c[i] *= sc.f[i];
  }
}

}  // namespace detail

// Encodes an embedded lyric (T x E, one token per row) into the 2H
// representation: forward pass output at the last token stacked on the
// backward pass output at the first token. vtilde must be given exactly
// when attention is enabled.
inline Matrix encode_lyric(const EncoderParams& p, const Matrix& embedded, const Matrix* vtilde,
                           EncodeCache* cache = nullptr) {
  if (embedded.rows() == 0) throw EmptyLyricError("encode_lyric: no tokens");
  if (embedded.cols() != p.input_dim) {
    throw ShapeError("encode_lyric: token dim " + std::to_string(embedded.cols()) +
                     " != encoder input dim " + std::to_string(p.input_dim));
  }
  if (p.attention != (vtilde != nullptr)) {
    throw ParameterError("encode_lyric: attention vector must be passed iff attention is on");
  }
  const AttentionParams* af = p.attention ? &p.attn_fwd : nullptr;
  const AttentionParams* ab =
      p.attention ? (p.shared_attention ? &p.attn_fwd : &p.attn_bwd) : nullptr;
  Matrix fwd_out = detail::run_direction(p.fwd, af, embedded, /*reverse=*/false, vtilde,
                                         cache ? &cache->fwd : nullptr);
  Matrix bwd_out = detail::run_direction(p.bwd, ab, embedded, /*reverse=*/true, vtilde,
                                         cache ? &cache->bwd : nullptr);
  Matrix rep = vstack(fwd_out, bwd_out);
  if (cache) {
    cache->vtilde = p.attention ? *vtilde : Matrix();
    cache->rep = rep;
  }
  return rep;
}

struct ForwardCache {
  EncodeCache enc;
  MlpCache mlp;
  Matrix mlp_in;
  int mood_row = -1;
  Matrix out;
};

// rep -> (optional mood concat) -> projection into tag space.
// mood_row = -1 stands for "no label": the concatenated block is zero.
inline Matrix encoder_forward(const EncoderParams& p, const Matrix& embedded,
                              const Matrix* vtilde, int mood_row, ForwardCache* cache = nullptr) {
  Matrix rep = encode_lyric(p, embedded, vtilde, cache ? &cache->enc : nullptr);
  Matrix in;
  if (p.mood) {
    Matrix mv(p.input_dim, 1);
    if (mood_row >= 0) {
      if (static_cast<std::size_t>(mood_row) >= p.mood_table.rows()) {
        throw IndexError("encoder_forward: mood row " + std::to_string(mood_row) +
                         " out of range");
      }
      for (std::size_t j = 0; j < p.input_dim; ++j) {
        mv[j] = p.mood_table(static_cast<std::size_t>(mood_row), j);
      }
    }
    in = vstack(rep, mv);
  } else {
    in = std::move(rep);
  }
  Matrix out = mlp_forward(p.proj, in, cache ? &cache->mlp : nullptr);
  if (cache) {
    cache->mlp_in = std::move(in);
    cache->mood_row = mood_row;
    cache->out = out;
  }
  return out;
}

// Backpropagates d_out (gradient on the projected vector) through the whole
// encoder; accumulates into g (same layout as the parameters).
inline void encoder_backward(const EncoderParams& p, const ForwardCache& cache,
                             const Matrix& d_out, EncoderParams& g) {
  Matrix d_in = mlp_backward(p.proj, cache.mlp, d_out, g.proj);
  const std::size_t H = p.hidden_dim;
  Matrix d_rep = slice(d_in, 0, 2 * H);
  if (p.mood && cache.mood_row >= 0) {
    const auto row = static_cast<std::size_t>(cache.mood_row);
    for (std::size_t j = 0; j < p.input_dim; ++j) {
      g.mood_table(row, j) += d_in[2 * H + j];
    }
  }
  const Matrix d_fwd = slice(d_rep, 0, H);
  const Matrix d_bwd = slice(d_rep, H, 2 * H);
  const Matrix* vt = p.attention ? &cache.enc.vtilde : nullptr;
  const AttentionParams* af = p.attention ? &p.attn_fwd : nullptr;
  const AttentionParams* ab =
      p.attention ? (p.shared_attention ? &p.attn_fwd : &p.attn_bwd) : nullptr;
  AttentionParams* gaf = p.attention ? &g.attn_fwd : nullptr;
  AttentionParams* gab = p.attention ? (p.shared_attention ? &g.attn_fwd : &g.attn_bwd) : nullptr;
  detail::direction_backward(p.fwd, af, cache.enc.fwd, vt, d_fwd, g.fwd, gaf);
  detail::direction_backward(p.bwd, ab, cache.enc.bwd, vt, d_bwd, g.bwd, gab);
}

}  // namespace tagsong
