#include "simplihumon/model.hpp"

#include <cmath>
#include <random>
#include <string>

namespace simplihumon {

namespace {

Tensor leaf_uniform(std::mt19937_64& rng, Shape shape, double bound) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

Tensor leaf_normal(std::mt19937_64& rng, Shape shape, double stddev) {
  std::normal_distribution<double> dist(0.0, stddev);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(v), true);
}

Linear make_linear(std::mt19937_64& rng, std::size_t in, std::size_t out) {
  const double bound = std::sqrt(1.0 / static_cast<double>(in));
  Linear l;
  l.W = leaf_uniform(rng, {in, out}, bound);
  l.b = leaf_uniform(rng, {out}, bound);
  return l;
}

Mlp2 make_mlp(std::mt19937_64& rng, std::size_t in, std::size_t hidden, std::size_t out) {
  Mlp2 m;
  m.fc1 = make_linear(rng, in, hidden);
  m.fc2 = make_linear(rng, hidden, out);
  return m;
}

NormWeights make_norm(std::size_t d, NormVariant v) {
  NormWeights n;
  n.gain = Tensor::full({d}, 1.0, true);
  if (v == NormVariant::layernorm) n.bias = Tensor::zeros({d}, true);
  return n;
}

AttnWeights make_attn(std::mt19937_64& rng, std::size_t d) {
  AttnWeights a;
  a.q = make_linear(rng, d, d);
  a.k = make_linear(rng, d, d);
  a.v = make_linear(rng, d, d);
  a.o = make_linear(rng, d, d);
  return a;
}

BlockWeights make_block(std::mt19937_64& rng, const ModelConfig& c) {
  BlockWeights b;
  b.norm1 = make_norm(c.d_model, c.norm_variant);
  b.attn = make_attn(rng, c.d_model);
  b.norm2 = make_norm(c.d_model, c.norm_variant);
  b.ffn = make_mlp(rng, c.d_model, c.ffn_mult * c.d_model, c.d_model);
  return b;
}

CrossBlockWeights make_cross_block(std::mt19937_64& rng, const ModelConfig& c) {
  CrossBlockWeights b;
  b.norm1 = make_norm(c.d_model, c.norm_variant);
  b.self_attn = make_attn(rng, c.d_model);
  b.norm2 = make_norm(c.d_model, c.norm_variant);
  b.cross_attn = make_attn(rng, c.d_model);
  b.norm3 = make_norm(c.d_model, c.norm_variant);
  b.ffn = make_mlp(rng, c.d_model, c.ffn_mult * c.d_model, c.d_model);
  return b;
}

using VisitFn = std::function<void(const std::string&, Tensor&)>;

void visit_linear(const std::string& prefix, Linear& l, const VisitFn& fn) {
  fn(prefix + ".W", l.W);
  fn(prefix + ".b", l.b);
}

void visit_mlp(const std::string& prefix, Mlp2& m, const VisitFn& fn) {
  visit_linear(prefix + ".fc1", m.fc1, fn);
  visit_linear(prefix + ".fc2", m.fc2, fn);
}

void visit_norm(const std::string& prefix, NormWeights& n, NormVariant v, const VisitFn& fn) {
  fn(prefix + ".gain", n.gain);
  if (v == NormVariant::layernorm) fn(prefix + ".bias", n.bias);
}

void visit_attn(const std::string& prefix, AttnWeights& a, const VisitFn& fn) {
  visit_linear(prefix + ".q", a.q, fn);
  visit_linear(prefix + ".k", a.k, fn);
  visit_linear(prefix + ".v", a.v, fn);
  visit_linear(prefix + ".o", a.o, fn);
}

void visit_block(const std::string& prefix, BlockWeights& b, NormVariant v, const VisitFn& fn) {
  visit_norm(prefix + ".norm1", b.norm1, v, fn);
  visit_attn(prefix + ".attn", b.attn, fn);
  visit_norm(prefix + ".norm2", b.norm2, v, fn);
  visit_mlp(prefix + ".ffn", b.ffn, fn);
}

void visit_cross_block(const std::string& prefix, CrossBlockWeights& b, NormVariant v,
                       const VisitFn& fn) {
  visit_norm(prefix + ".norm1", b.norm1, v, fn);
  visit_attn(prefix + ".self", b.self_attn, fn);
  visit_norm(prefix + ".norm2", b.norm2, v, fn);
  visit_attn(prefix + ".cross", b.cross_attn, fn);
  visit_norm(prefix + ".norm3", b.norm3, v, fn);
  visit_mlp(prefix + ".ffn", b.ffn, fn);
}

Tensor linear_apply(const Tensor& x, const Linear& l) {
  Tensor y = matmul(x, l.W);
  return add(y, broadcast(l.b, y.shape()));
}

Tensor mlp_apply(const Tensor& x, const Mlp2& m) {
  return linear_apply(gelu(linear_apply(x, m.fc1)), m.fc2);
}

Tensor norm_apply(const Tensor& x, const NormWeights& w, NormVariant v) {
  return v == NormVariant::rmsnorm ? rmsnorm(x, w.gain) : layernorm(x, w.gain, w.bias);
}

// Multi-head attention over already-normalized inputs. Queries come from xq,
// keys and values from xkv; capture, when given, receives the post-softmax
// weights stacked into {heads, rows(xq), rows(xkv)}.
Tensor mha(const Tensor& xq, const Tensor& xkv, const AttnWeights& w, std::size_t n_heads,
           Tensor* capture) {
  const std::size_t d = xq.shape()[1];
  const std::size_t dh = d / n_heads;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  Tensor q = linear_apply(xq, w.q);
  Tensor k = linear_apply(xkv, w.k);
  Tensor v = linear_apply(xkv, w.v);
  std::vector<Tensor> heads;
  std::vector<Tensor> maps;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    Tensor qh = slice(q, 1, h * dh, dh);
    Tensor kh = slice(k, 1, h * dh, dh);
    Tensor vh = slice(v, 1, h * dh, dh);
    Tensor a = softmax(scale(matmul(qh, transpose(kh)), inv_sqrt_dh));
    if (capture) maps.push_back(reshape(a, {1, a.shape()[0], a.shape()[1]}));
    heads.push_back(matmul(a, vh));
  }
  if (capture) *capture = maps.size() == 1 ? maps[0] : concat(maps, 0);
  Tensor merged = n_heads == 1 ? heads[0] : concat(heads, 1);
  return linear_apply(merged, w.o);
}

// Pre-norm residual block: x + attn(norm1(x)), then + ffn(norm2(·)).
Tensor block_apply(const Tensor& x, const BlockWeights& b, const ModelConfig& c, Tensor* capture) {
  Tensor y = norm_apply(x, b.norm1, c.norm_variant);
  Tensor h = add(x, mha(y, y, b.attn, c.n_heads, capture));
  return add(h, mlp_apply(norm_apply(h, b.norm2, c.norm_variant), b.ffn));
}

Tensor stream_embed(const Tensor& e, const Tensor& pe, const Tensor& type_vec,
                    const ModelConfig& c) {
  Tensor out = add(e, pe);
  if (c.type_embedding_enabled) out = add(out, broadcast(type_vec, out.shape()));
  return out;
}

Tensor embed_for(TaskMode task, const Tensor& T_past, const Tensor& P_past, const ModelParams& p,
                 const ModelConfig& c) {
  Tensor pe = sinusoidal_pe(c.H, c.d_model);
  std::vector<Tensor> streams;
  if (task_has_traj(task)) {
    if (!T_past.defined() || T_past.shape() != Shape{c.H, 3})
      throw ShapeError("embed_context: trajectory past must have shape {" +
                       std::to_string(c.H) + ", 3}, got " +
                       (T_past.defined() ? shape_str(T_past.shape()) : "nothing"));
    streams.push_back(stream_embed(linear_apply(T_past, p.traj_embed), pe, p.type_traj, c));
  }
  if (task_has_pose(task)) {
    if (!P_past.defined() || P_past.shape() != Shape{c.H, c.M, 3})
      throw ShapeError("embed_context: pose past must have shape {" + std::to_string(c.H) + ", " +
                       std::to_string(c.M) + ", 3}, got " +
                       (P_past.defined() ? shape_str(P_past.shape()) : "nothing"));
    Tensor flat = reshape(P_past, {c.H, c.M * 3});
    streams.push_back(stream_embed(mlp_apply(flat, p.pose_embed), pe, p.type_pose, c));
  }
  return streams.size() == 1 ? streams[0] : concat(streams, 0);
}

Tensor queries_for(TaskMode task, const ModelParams& p, const ModelConfig& c) {
  Tensor pe = sinusoidal_pe(c.F, c.d_model);
  Tensor base = add(linear_apply(p.query_bank, p.query_proj), pe);
  std::vector<Tensor> qs;
  if (task_has_traj(task))
    qs.push_back(c.type_embedding_enabled ? add(base, broadcast(p.type_traj, base.shape()))
                                          : base);
  if (task_has_pose(task))
    qs.push_back(c.type_embedding_enabled ? add(base, broadcast(p.type_pose, base.shape()))
                                          : base);
  return qs.size() == 1 ? qs[0] : concat(qs, 0);
}

ProposalSet heads_for(TaskMode task, const Tensor& Z, const ModelParams& p, const ModelConfig& c) {
  const bool has_t = task_has_traj(task);
  const bool has_p = task_has_pose(task);
  const std::size_t rows = (has_t ? c.F : 0) + (has_p ? c.F : 0);
  if (Z.rank() != 2 || Z.shape()[0] != rows || Z.shape()[1] != c.d_model)
    throw ShapeError("prediction_heads: expected decoded rows {" + std::to_string(rows) + ", " +
                     std::to_string(c.d_model) + "}, got " + shape_str(Z.shape()));
  ProposalSet out;
  if (has_t) {
    Tensor zt = has_p ? slice(Z, 0, 0, c.F) : Z;
    Tensor split = linear_apply(zt, p.traj_split);  // {F, K*3}
    std::vector<Tensor> branches;
    branches.reserve(c.K);
    for (std::size_t k = 0; k < c.K; ++k) {
      Tensor bk = linear_apply(slice(split, 1, k * 3, 3), p.traj_head);
      branches.push_back(reshape(bk, {1, c.F, 3}));
    }
    out.traj = branches.size() == 1 ? branches[0] : concat(branches, 0);
  }
  if (has_p) {
    Tensor zp = has_t ? slice(Z, 0, c.F, c.F) : Z;
    Tensor split = linear_apply(zp, p.pose_split);  // {F, K*M*3}
    std::vector<Tensor> branches;
    branches.reserve(c.K);
    for (std::size_t k = 0; k < c.K; ++k) {
      Tensor bk = mlp_apply(slice(split, 1, k * c.M * 3, c.M * 3), p.pose_head);
      branches.push_back(reshape(bk, {1, c.F, c.M, 3}));
    }
    out.pose = branches.size() == 1 ? branches[0] : concat(branches, 0);
  }
  return out;
}

ProposalSet forward_impl(const NormalizedSample& s, const ModelParams& p, const ModelConfig& c,
                         TaskMode task, DecoderResult* capture) {
  Tensor ctx = embed_for(task, s.T_past, s.P_past, p, c);
  Tensor queries = queries_for(task, p, c);
  DecoderResult dec = decoder_forward(ctx, queries, p, c, capture != nullptr);
  ProposalSet out = heads_for(task, dec.Z, p, c);
  if (capture) *capture = std::move(dec);
  return out;
}

}  // namespace

const char* to_string(AttnVariant v) {
  return v == AttnVariant::unified ? "unified" : "cross";
}

AttnVariant attn_variant_from_string(const std::string& s) {
  if (s == "unified") return AttnVariant::unified;
  if (s == "cross") return AttnVariant::cross;
  throw ConfigError("unknown attention variant \"" + s + "\" (expected unified or cross)");
}

const char* to_string(NormVariant v) {
  return v == NormVariant::rmsnorm ? "rmsnorm" : "layernorm";
}

NormVariant norm_variant_from_string(const std::string& s) {
  if (s == "rmsnorm") return NormVariant::rmsnorm;
  if (s == "layernorm") return NormVariant::layernorm;
  throw ConfigError("unknown norm variant \"" + s + "\" (expected rmsnorm or layernorm)");
}

void validate_config(const ModelConfig& c) {
  if (c.L < 1) throw ConfigError("model config: L must be >= 1");
  if (c.d_model < 2) throw ConfigError("model config: d_model must be >= 2");
  if (c.d_model % 2 != 0)
    throw ConfigError("model config: d_model must be even for the sinusoidal position table");
  if (c.n_heads < 1) throw ConfigError("model config: n_heads must be >= 1");
  if (c.d_model % c.n_heads != 0)
    throw ConfigError("model config: d_model (" + std::to_string(c.d_model) +
                      ") must be divisible by n_heads (" + std::to_string(c.n_heads) + ")");
  if (c.ffn_mult < 1) throw ConfigError("model config: ffn_mult must be >= 1");
  if (c.H < 1) throw ConfigError("model config: H must be >= 1");
  if (c.F < 1) throw ConfigError("model config: F must be >= 1");
  if (c.K < 1) throw ConfigError("model config: K must be >= 1");
  if (task_has_pose(c.task_mode) && c.M < 1)
    throw ConfigError("model config: M must be >= 1 when the task includes pose");
}

ModelParams init_params(const ModelConfig& c, std::uint64_t seed) {
  validate_config(c);
  std::mt19937_64 rng(seed);
  const bool has_t = task_has_traj(c.task_mode);
  const bool has_p = task_has_pose(c.task_mode);
  const std::size_t d = c.d_model;
  ModelParams p;
  if (has_t) p.traj_embed = make_linear(rng, 3, d);
  if (has_p) p.pose_embed = make_mlp(rng, c.M * 3, d, d);
  p.query_bank = leaf_normal(rng, {c.F, 3}, 0.02);
  p.query_proj = make_linear(rng, 3, d);
  if (c.type_embedding_enabled) {
    if (has_t) p.type_traj = leaf_normal(rng, {d}, 0.02);
    if (has_p) p.type_pose = leaf_normal(rng, {d}, 0.02);
  }
  p.blocks.reserve(c.L);
  for (std::size_t l = 0; l < c.L; ++l) p.blocks.push_back(make_block(rng, c));
  if (c.attn_variant == AttnVariant::cross) {
    p.cross_blocks.reserve(c.L);
    for (std::size_t l = 0; l < c.L; ++l) p.cross_blocks.push_back(make_cross_block(rng, c));
  }
  if (has_t) {
    p.traj_split = make_linear(rng, d, c.K * 3);
    p.traj_head = make_linear(rng, 3, 3);
  }
  if (has_p) {
    p.pose_split = make_linear(rng, d, c.K * c.M * 3);
    p.pose_head = make_mlp(rng, c.M * 3, d, c.M * 3);
  }
  return p;
}

void visit_params(ModelParams& p, const ModelConfig& c, const VisitFn& fn) {
  const bool has_t = task_has_traj(c.task_mode);
  const bool has_p = task_has_pose(c.task_mode);
  if (has_t) visit_linear("traj_embed", p.traj_embed, fn);
  if (has_p) visit_mlp("pose_embed", p.pose_embed, fn);
  fn("query_bank", p.query_bank);
  visit_linear("query_proj", p.query_proj, fn);
  if (c.type_embedding_enabled) {
    if (has_t) fn("type.traj", p.type_traj);
    if (has_p) fn("type.pose", p.type_pose);
  }
  const std::string stack = c.attn_variant == AttnVariant::cross ? "enc" : "block";
  for (std::size_t l = 0; l < p.blocks.size(); ++l)
    visit_block(stack + std::to_string(l), p.blocks[l], c.norm_variant, fn);
  for (std::size_t l = 0; l < p.cross_blocks.size(); ++l)
    visit_cross_block("dec" + std::to_string(l), p.cross_blocks[l], c.norm_variant, fn);
  if (has_t) {
    visit_linear("traj_split", p.traj_split, fn);
    visit_linear("traj_head", p.traj_head, fn);
  }
  if (has_p) {
    visit_linear("pose_split", p.pose_split, fn);
    visit_mlp("pose_head", p.pose_head, fn);
  }
}

std::vector<Tensor> collect_params(ModelParams& p, const ModelConfig& c) {
  std::vector<Tensor> out;
  visit_params(p, c, [&](const std::string&, Tensor& t) { out.push_back(t); });
  return out;
}

std::size_t parameter_count(const ModelConfig& c) {
  validate_config(c);
  const bool has_t = task_has_traj(c.task_mode);
  const bool has_p = task_has_pose(c.task_mode);
  const std::size_t d = c.d_model;
  const std::size_t hidden = c.ffn_mult * d;
  const std::size_t norm = d + (c.norm_variant == NormVariant::layernorm ? d : 0);
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t ffn = d * hidden + hidden + hidden * d + d;
  const std::size_t block = 2 * norm + attn + ffn;
  const std::size_t cross_block = 3 * norm + 2 * attn + ffn;
  std::size_t n = 0;
  if (has_t) n += 3 * d + d;                          // traj_embed
  if (has_p) n += c.M * 3 * d + d + d * d + d;        // pose_embed
  n += c.F * 3;                                       // query_bank
  n += 3 * d + d;                                     // query_proj
  if (c.type_embedding_enabled) n += (has_t ? d : 0) + (has_p ? d : 0);
  n += c.L * block;
  if (c.attn_variant == AttnVariant::cross) n += c.L * cross_block;
  if (has_t) n += d * c.K * 3 + c.K * 3 + 3 * 3 + 3;  // traj_split + traj_head
  if (has_p) {
    n += d * c.K * c.M * 3 + c.K * c.M * 3;           // pose_split
    n += c.M * 3 * d + d + d * c.M * 3 + c.M * 3;     // pose_head
  }
  return n;
}

Tensor sinusoidal_pe(std::size_t length, std::size_t d_model) {
  if (length < 1) throw ShapeError("sinusoidal_pe: length must be >= 1");
  if (d_model < 2 || d_model % 2 != 0)
    throw ShapeError("sinusoidal_pe: d_model must be even and >= 2, got " +
                     std::to_string(d_model));
  std::vector<double> v(length * d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model / 2; ++i) {
      const double arg = static_cast<double>(pos) /
                         std::pow(10000.0, static_cast<double>(2 * i) /
                                               static_cast<double>(d_model));
      v[pos * d_model + 2 * i] = std::sin(arg);
      v[pos * d_model + 2 * i + 1] = std::cos(arg);
    }
  }
  return Tensor::from_data({length, d_model}, std::move(v));
}

Tensor embed_context(const Tensor& T_past, const Tensor& P_past, const ModelParams& p,
                     const ModelConfig& c) {
  if (!task_has_traj(c.task_mode) && T_past.defined())
    throw ShapeError("embed_context: trajectory stream provided but task_mode is " +
                     std::string(to_string(c.task_mode)));
  if (!task_has_pose(c.task_mode) && P_past.defined())
    throw ShapeError("embed_context: pose stream provided but task_mode is " +
                     std::string(to_string(c.task_mode)));
  return embed_for(c.task_mode, T_past, P_past, p, c);
}

Tensor build_queries(const ModelParams& p, const ModelConfig& c) {
  return queries_for(c.task_mode, p, c);
}

DecoderResult decoder_forward(const Tensor& C, const Tensor& Q, const ModelParams& p,
                              const ModelConfig& c, bool capture_attention) {
  if (!C.defined() || C.rank() != 2 || C.shape()[1] != c.d_model)
    throw ShapeError("decoder_forward: context must be {*, " + std::to_string(c.d_model) + "}");
  if (!Q.defined() || Q.rank() != 2 || Q.shape()[1] != c.d_model)
    throw ShapeError("decoder_forward: queries must be {*, " + std::to_string(c.d_model) + "}");
  DecoderResult res;
  if (c.attn_variant == AttnVariant::unified) {
    Tensor x = concat({C, Q}, 0);
    for (const BlockWeights& b : p.blocks) {
      Tensor map;
      x = block_apply(x, b, c, capture_attention ? &map : nullptr);
      if (capture_attention) res.self_attn.push_back(map);
    }
    res.Z = slice(x, 0, C.shape()[0], Q.shape()[0]);
    return res;
  }
  Tensor enc = C;
  for (const BlockWeights& b : p.blocks) {
    Tensor map;
    enc = block_apply(enc, b, c, capture_attention ? &map : nullptr);
    if (capture_attention) res.enc_attn.push_back(map);
  }
  Tensor x = Q;
  for (const CrossBlockWeights& b : p.cross_blocks) {
    Tensor self_map, cross_map;
    Tensor y = norm_apply(x, b.norm1, c.norm_variant);
    x = add(x, mha(y, y, b.self_attn, c.n_heads, capture_attention ? &self_map : nullptr));
    Tensor yq = norm_apply(x, b.norm2, c.norm_variant);
    x = add(x, mha(yq, enc, b.cross_attn, c.n_heads, capture_attention ? &cross_map : nullptr));
    x = add(x, mlp_apply(norm_apply(x, b.norm3, c.norm_variant), b.ffn));
    if (capture_attention) {
      res.self_attn.push_back(self_map);
      res.cross_attn.push_back(cross_map);
    }
  }
  res.Z = x;
  return res;
}

ProposalSet prediction_heads(const Tensor& Z, const ModelParams& p, const ModelConfig& c) {
  return heads_for(c.task_mode, Z, p, c);
}

ProposalSet model_forward(const NormalizedSample& sample, const ModelParams& p,
                          const ModelConfig& c) {
  validate_config(c);
  if (sample.task != c.task_mode)
    throw ConfigError("model_forward: sample task " + std::string(to_string(sample.task)) +
                      " does not match model task_mode " +
                      std::string(to_string(c.task_mode)));
  return forward_impl(sample, p, c, c.task_mode, nullptr);
}

ProposalSet model_forward_routed(const NormalizedSample& sample, const ModelParams& p,
                                 const ModelConfig& c, TaskMode task, DecoderResult* capture) {
  validate_config(c);
  if (!task_covers(c.task_mode, task))
    throw ConfigError("model task_mode " + std::string(to_string(c.task_mode)) +
                      " cannot serve task " + std::string(to_string(task)));
  if (!task_covers(sample.task, task))
    throw DataError("sample with task " + std::string(to_string(sample.task)) +
                    " lacks the streams needed for task " + std::string(to_string(task)));
  return forward_impl(sample, p, c, task, capture);
}

}  // namespace simplihumon
