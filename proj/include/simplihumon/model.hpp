#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "simplihumon/motion_data.hpp"
#include "simplihumon/proposal.hpp"
#include "simplihumon/tensor.hpp"

namespace simplihumon {

enum class AttnVariant { unified, cross };
enum class NormVariant { rmsnorm, layernorm };

const char* to_string(AttnVariant v);
AttnVariant attn_variant_from_string(const std::string& s);  // throws ConfigError
const char* to_string(NormVariant v);
NormVariant norm_variant_from_string(const std::string& s);  // throws ConfigError

struct ModelConfig {
  std::size_t L = 2;         // decoder depth (cross variant also gets L encoder layers)
  std::size_t d_model = 32;
  std::size_t n_heads = 4;
  std::size_t ffn_mult = 4;
  std::size_t H = 8;         // past frames
  std::size_t F = 8;         // future frames
  std::size_t M = 1;         // joints
  std::size_t K = 2;         // proposal branches
  TaskMode task_mode = TaskMode::joint;
  AttnVariant attn_variant = AttnVariant::unified;
  NormVariant norm_variant = NormVariant::rmsnorm;
  bool type_embedding_enabled = true;
};

void validate_config(const ModelConfig& c);  // throws ConfigError naming the field

struct Linear {
  Tensor W;  // {in, out}
  Tensor b;  // {out}
};

struct Mlp2 {
  Linear fc1, fc2;  // fc1 -> gelu -> fc2
};

struct NormWeights {
  Tensor gain;
  Tensor bias;  // layernorm only
};

struct AttnWeights {
  Linear q, k, v, o;
};

struct BlockWeights {
  NormWeights norm1, norm2;
  AttnWeights attn;
  Mlp2 ffn;
};

struct CrossBlockWeights {
  NormWeights norm1, norm2, norm3;
  AttnWeights self_attn, cross_attn;
  Mlp2 ffn;
};

/// All learnable state. Streams absent from the task mode stay undefined, as
/// do type embeddings when disabled and cross_blocks for the unified variant.
struct ModelParams {
  Linear traj_embed;   // 3 -> d_model
  Mlp2 pose_embed;     // M*3 -> d_model -> d_model
  Tensor query_bank;   // {F, 3}
  Linear query_proj;   // 3 -> d_model
  Tensor type_traj;    // {d_model}
  Tensor type_pose;    // {d_model}
  std::vector<BlockWeights> blocks;             // unified stack, or the cross variant's encoder
  std::vector<CrossBlockWeights> cross_blocks;  // cross variant's decoder
  Linear traj_split;   // d_model -> K*3
  Linear traj_head;    // 3 -> 3, shared across branches
  Linear pose_split;   // d_model -> K*M*3
  Mlp2 pose_head;      // M*3 -> d_model -> M*3, shared across branches
};

/// Fresh parameters in a fixed creation order: linear weights and biases
/// uniform in +-sqrt(1/fan_in), query bank and type embeddings normal(0,
/// 0.02), norm gains one, layernorm biases zero.
ModelParams init_params(const ModelConfig& c, std::uint64_t seed);

/// Calls fn(name, tensor) for every parameter in the same fixed order
/// init_params creates them; the order defines the checkpoint layout.
void visit_params(ModelParams& p, const ModelConfig& c,
                  const std::function<void(const std::string&, Tensor&)>& fn);

std::vector<Tensor> collect_params(ModelParams& p, const ModelConfig& c);

std::size_t parameter_count(const ModelConfig& c);

/// PE table {length, d_model}: row p holds sin(p / 10000^(2i/d)) in even
/// column 2i and cos of the same argument in the odd column after it.
Tensor sinusoidal_pe(std::size_t length, std::size_t d_model);

/// Embeds the present past streams, adds PE over the H steps and the stream
/// type embedding, and concatenates trajectory-first: {2H, d} joint, {H, d}
/// single.
Tensor embed_context(const Tensor& T_past, const Tensor& P_past, const ModelParams& p,
                     const ModelConfig& c);

/// Projects the query bank once and instantiates it per stream with PE and
/// type embeddings: {2F, d} joint, {F, d} single.
Tensor build_queries(const ModelParams& p, const ModelConfig& c);

struct DecoderResult {
  Tensor Z;  // {|Q|, d_model}
  // Post-softmax maps, populated only when capture was requested.
  std::vector<Tensor> self_attn;   // unified: per layer {heads, S, S}; cross: decoder self-attn
  std::vector<Tensor> enc_attn;    // cross: encoder self-attn per layer
  std::vector<Tensor> cross_attn;  // cross: per decoder layer {heads, |Q|, |C|}
};

DecoderResult decoder_forward(const Tensor& C, const Tensor& Q, const ModelParams& p,
                              const ModelConfig& c, bool capture_attention);

/// Splits each stream's F rows of Z into K branches through the stream's
/// K*C projection (branch k owns columns [k*C, (k+1)*C)), then applies the
/// shared per-stream head to every branch.
ProposalSet prediction_heads(const Tensor& Z, const ModelParams& p, const ModelConfig& c);

/// Full forward pass. The sample's task must equal the config's task mode.
ProposalSet model_forward(const NormalizedSample& sample, const ModelParams& p,
                          const ModelConfig& c);

/// Forward pass routed by a task-type flag: a joint-capability model can run
/// single-stream samples through just that stream's embeddings and heads.
/// `task` must be covered by the config and by the sample's streams.
ProposalSet model_forward_routed(const NormalizedSample& sample, const ModelParams& p,
                                 const ModelConfig& c, TaskMode task,
                                 DecoderResult* capture = nullptr);

}  // namespace simplihumon
