#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <set>

#include <json.hpp>

#include "simplihumon/checkpoint.hpp"
#include "simplihumon/metrics.hpp"
#include "simplihumon/model.hpp"

using namespace simplihumon;

namespace {

ModelConfig tiny_config() {
  ModelConfig c;
  c.L = 1;
  c.d_model = 8;
  c.n_heads = 2;
  c.ffn_mult = 2;
  c.H = 2;
  c.F = 2;
  c.M = 2;
  c.K = 2;
  c.task_mode = TaskMode::joint;
  return c;
}

Tensor rnd(Shape shape, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> v(shape_numel(shape));
  for (auto& x : v) x = dist(rng);
  return Tensor::from_data(std::move(shape), std::move(v));
}

NormalizedSample sample_for(const ModelConfig& c, std::uint64_t seed) {
  NormalizedSample s;
  s.task = c.task_mode;
  if (task_has_traj(c.task_mode)) {
    s.T_past = rnd({c.H, 3}, seed);
    s.gt_traj = rnd({c.F, 3}, seed + 1);
  }
  if (task_has_pose(c.task_mode)) {
    s.P_past = rnd({c.H, c.M, 3}, seed + 2);
    s.gt_pose = rnd({c.F, c.M, 3}, seed + 3);
    s.joint_valid.assign(c.M, 1);
  }
  return s;
}

void fill_all(ModelParams& p, const ModelConfig& c, double v) {
  visit_params(p, c, [&](const std::string&, Tensor& t) {
    for (double& x : t.mutable_data()) x = v;
  });
}

std::vector<std::string> param_names(ModelParams& p, const ModelConfig& c) {
  std::vector<std::string> names;
  visit_params(p, c, [&](const std::string& n, Tensor&) { names.push_back(n); });
  return names;
}

}  // namespace

TEST_CASE("config validation names the offending field") {
  ModelConfig c = tiny_config();
  c.L = 0;
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("L"), ConfigError);
  c = tiny_config();
  c.d_model = 7;
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("even"), ConfigError);
  c = tiny_config();
  c.d_model = 10;
  c.n_heads = 4;
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("n_heads"), ConfigError);
  c = tiny_config();
  c.ffn_mult = 0;
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("ffn_mult"), ConfigError);
  c = tiny_config();
  c.K = 0;
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("K"), ConfigError);
  c = tiny_config();
  c.M = 0;
  CHECK_THROWS_WITH_AS(validate_config(c), doctest::Contains("M"), ConfigError);
  c.task_mode = TaskMode::traj_only;
  CHECK_NOTHROW(validate_config(c));  // M unused without a pose stream
}

TEST_CASE("sinusoidal position table matches the closed form") {
  Tensor pe = sinusoidal_pe(2, 4);
  REQUIRE(pe.shape() == Shape{2, 4});
  // position 0: sin(0)=0 and cos(0)=1 alternate across the row
  CHECK(pe.data()[0] == 0.0);
  CHECK(pe.data()[1] == 1.0);
  CHECK(pe.data()[2] == 0.0);
  CHECK(pe.data()[3] == 1.0);
  // position 1: arguments 1 and 1/100
  CHECK(pe.data()[4] == doctest::Approx(0.8414709848078965).epsilon(1e-15));
  CHECK(pe.data()[5] == doctest::Approx(0.5403023058681397).epsilon(1e-15));
  CHECK(pe.data()[6] == doctest::Approx(0.009999833334166664).epsilon(1e-15));
  CHECK(pe.data()[7] == doctest::Approx(0.9999500004166653).epsilon(1e-15));

  Tensor big = sinusoidal_pe(50, 16);
  for (double v : big.data()) {
    CHECK(v <= 1.0);
    CHECK(v >= -1.0);
  }
  CHECK_THROWS_AS(sinusoidal_pe(4, 5), ShapeError);
  CHECK_THROWS_AS(sinusoidal_pe(0, 4), ShapeError);
}

TEST_CASE("position encoding differentiates otherwise identical context rows") {
  ModelConfig c = tiny_config();
  c.task_mode = TaskMode::traj_only;
  c.H = 4;
  ModelParams p = init_params(c, 3);
  // all four past frames identical, so only the PE separates the rows
  Tensor t_past = Tensor::from_data({4, 3}, {0.3, 0.1, 0.0, 0.3, 0.1, 0.0, 0.3, 0.1, 0.0, 0.3, 0.1, 0.0});
  Tensor ctx = embed_context(t_past, Tensor{}, p, c);
  for (std::size_t r = 1; r < 4; ++r) {
    bool differs = false;
    for (std::size_t j = 0; j < c.d_model; ++j)
      differs = differs || ctx.data()[r * c.d_model + j] != ctx.data()[j];
    CHECK(differs);
  }
}

TEST_CASE("parameter count matches a by-hand enumeration of the smallest model") {
  ModelConfig c;
  c.L = 1;
  c.d_model = 8;
  c.n_heads = 2;
  c.ffn_mult = 4;
  c.H = 1;
  c.F = 1;
  c.M = 1;
  c.K = 1;
  c.task_mode = TaskMode::joint;
  c.type_embedding_enabled = true;
  // traj embed 32, pose embed 104, query bank 3, query proj 32, types 16,
  // block 856 (norms 8+8, attention 288, ffn 552), traj heads 27+12,
  // pose heads 27+59
  CHECK(parameter_count(c) == 1168);
  ModelParams p = init_params(c, 0);
  std::size_t visited = 0;
  visit_params(p, c, [&](const std::string&, Tensor& t) { visited += t.numel(); });
  CHECK(visited == 1168);
}

TEST_CASE("parameter count equals visitation total across config axes") {
  for (TaskMode task : {TaskMode::traj_only, TaskMode::pose_only, TaskMode::joint}) {
    for (AttnVariant attn : {AttnVariant::unified, AttnVariant::cross}) {
      for (NormVariant norm : {NormVariant::rmsnorm, NormVariant::layernorm}) {
        for (bool types : {false, true}) {
          ModelConfig c = tiny_config();
          c.task_mode = task;
          c.attn_variant = attn;
          c.norm_variant = norm;
          c.type_embedding_enabled = types;
          c.L = 2;
          c.M = 3;
          c.K = 4;
          ModelParams p = init_params(c, 1);
          std::size_t visited = 0;
          visit_params(p, c, [&](const std::string&, Tensor& t) { visited += t.numel(); });
          CHECK(parameter_count(c) == visited);
        }
      }
    }
  }
}

TEST_CASE("parameter count grows with depth and matches published scale") {
  ModelConfig base = tiny_config();
  std::size_t prev = 0;
  for (std::size_t L = 1; L <= 4; ++L) {
    base.L = L;
    std::size_t n = parameter_count(base);
    CHECK(n > prev);
    prev = n;
  }

  ModelConfig wide;
  wide.L = 6;
  wide.d_model = 192;
  wide.n_heads = 8;
  wide.ffn_mult = 4;
  wide.H = 50;
  wide.F = 25;
  wide.M = 15;
  wide.K = 6;
  wide.task_mode = TaskMode::joint;
  std::size_t wide_count = parameter_count(wide);
  CHECK(wide_count >= 1'000'000);
  CHECK(wide_count <= 10'000'000);

  ModelConfig deep = wide;
  deep.L = 16;
  deep.d_model = 48;
  deep.n_heads = 4;
  std::size_t deep_count = parameter_count(deep);
  CHECK(deep_count >= 100'000);
  CHECK(deep_count < 1'000'000);
}

TEST_CASE("initialization is seed-deterministic with unit gains") {
  ModelConfig c = tiny_config();
  c.norm_variant = NormVariant::layernorm;
  ModelParams a = init_params(c, 42);
  ModelParams b = init_params(c, 42);
  ModelParams other = init_params(c, 43);
  std::vector<Tensor> va = collect_params(a, c);
  std::vector<Tensor> vb = collect_params(b, c);
  std::vector<Tensor> vo = collect_params(other, c);
  REQUIRE(va.size() == vb.size());
  bool any_diff = false;
  for (std::size_t i = 0; i < va.size(); ++i) {
    CHECK(va[i].data() == vb[i].data());
    any_diff = any_diff || va[i].data() != vo[i].data();
  }
  CHECK(any_diff);
  for (double g : a.blocks[0].norm1.gain.data()) CHECK(g == 1.0);
  for (double z : a.blocks[0].norm1.bias.data()) CHECK(z == 0.0);
  CHECK(a.traj_embed.W.requires_grad());
}

TEST_CASE("visitation order and names define the checkpoint layout") {
  ModelConfig c = tiny_config();
  ModelParams p = init_params(c, 0);
  std::vector<std::string> names = param_names(p, c);
  std::vector<std::string> expected = {
      "traj_embed.W",     "traj_embed.b",     "pose_embed.fc1.W", "pose_embed.fc1.b",
      "pose_embed.fc2.W", "pose_embed.fc2.b", "query_bank",       "query_proj.W",
      "query_proj.b",     "type.traj",        "type.pose",        "block0.norm1.gain",
      "block0.attn.q.W",  "block0.attn.q.b",  "block0.attn.k.W",  "block0.attn.k.b",
      "block0.attn.v.W",  "block0.attn.v.b",  "block0.attn.o.W",  "block0.attn.o.b",
      "block0.norm2.gain", "block0.ffn.fc1.W", "block0.ffn.fc1.b", "block0.ffn.fc2.W",
      "block0.ffn.fc2.b", "traj_split.W",     "traj_split.b",     "traj_head.W",
      "traj_head.b",      "pose_split.W",     "pose_split.b",     "pose_head.fc1.W",
      "pose_head.fc1.b",  "pose_head.fc2.W",  "pose_head.fc2.b"};
  CHECK(names == expected);

  ModelConfig cc = tiny_config();
  cc.attn_variant = AttnVariant::cross;
  cc.type_embedding_enabled = false;
  cc.task_mode = TaskMode::traj_only;
  ModelParams pc = init_params(cc, 0);
  std::vector<std::string> cross_names = param_names(pc, cc);
  CHECK(cross_names.front() == "traj_embed.W");
  std::set<std::string> cross_set(cross_names.begin(), cross_names.end());
  CHECK(cross_set.count("enc0.attn.q.W") == 1);
  CHECK(cross_set.count("dec0.self.q.W") == 1);
  CHECK(cross_set.count("dec0.cross.q.W") == 1);
  CHECK(cross_set.count("dec0.norm3.gain") == 1);
  CHECK(cross_set.count("type.traj") == 0);
  CHECK(cross_set.count("pose_embed.fc1.W") == 0);
  CHECK(cross_set.count("pose_split.W") == 0);
}

TEST_CASE("context embedding concatenates trajectory before pose") {
  ModelConfig c = tiny_config();
  c.d_model = 16;
  c.n_heads = 4;
  c.H = 5;
  c.M = 3;
  ModelParams p = init_params(c, 11);
  Tensor t_past = rnd({5, 3}, 1);
  Tensor p_past = rnd({5, 3, 3}, 2);
  Tensor both = embed_context(t_past, p_past, p, c);
  CHECK(both.shape() == Shape{10, 16});

  ModelConfig pose_cfg = c;
  pose_cfg.task_mode = TaskMode::pose_only;
  ModelParams pp = init_params(pose_cfg, 11);
  Tensor pose_ctx = embed_context(Tensor{}, p_past, pp, pose_cfg);
  CHECK(pose_ctx.shape() == Shape{5, 16});

  CHECK_THROWS_AS(embed_context(t_past, p_past, pp, pose_cfg), ShapeError);
  CHECK_THROWS_AS(embed_context(Tensor{}, p_past, p, c), ShapeError);
  Tensor wrong_h = rnd({4, 3}, 3);
  CHECK_THROWS_WITH_AS(embed_context(wrong_h, p_past, p, c), doctest::Contains("5"), ShapeError);
}

TEST_CASE("query construction duplicates the projected bank per stream") {
  ModelConfig c = tiny_config();
  c.d_model = 16;
  c.n_heads = 4;
  c.F = 10;
  ModelParams p = init_params(c, 5);
  Tensor q = build_queries(p, c);
  CHECK(q.shape() == Shape{20, 16});

  // with type embeddings the two stream blocks must differ
  bool differs = false;
  for (std::size_t i = 0; i < 10 * 16; ++i)
    differs = differs || q.data()[i] != q.data()[10 * 16 + i];
  CHECK(differs);

  ModelConfig no_type = c;
  no_type.type_embedding_enabled = false;
  ModelParams pn = init_params(no_type, 5);
  Tensor qn = build_queries(pn, no_type);
  REQUIRE(qn.shape() == Shape{20, 16});
  for (std::size_t i = 0; i < 10 * 16; ++i)
    CHECK(qn.data()[i] == qn.data()[10 * 16 + i]);

  ModelConfig single = c;
  single.task_mode = TaskMode::traj_only;
  ModelParams ps = init_params(single, 5);
  CHECK(build_queries(ps, single).shape() == Shape{10, 16});
}

TEST_CASE("unified decoder attends over the full token sequence") {
  ModelConfig c = tiny_config();
  c.d_model = 16;
  c.n_heads = 4;
  c.H = 5;
  c.F = 10;
  c.M = 3;
  c.L = 2;
  ModelParams p = init_params(c, 9);
  Tensor ctx = embed_context(rnd({5, 3}, 1), rnd({5, 3, 3}, 2), p, c);
  Tensor q = build_queries(p, c);
  DecoderResult res = decoder_forward(ctx, q, p, c, true);
  CHECK(res.Z.shape() == Shape{20, 16});
  REQUIRE(res.self_attn.size() == 2);
  CHECK(res.enc_attn.empty());
  CHECK(res.cross_attn.empty());
  for (const Tensor& map : res.self_attn) {
    REQUIRE(map.shape() == Shape{4, 30, 30});  // S = 2H + 2F
    for (std::size_t h = 0; h < 4; ++h)
      for (std::size_t r = 0; r < 30; ++r) {
        double sum = 0.0;
        for (std::size_t col = 0; col < 30; ++col) sum += map.data()[(h * 30 + r) * 30 + col];
        CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
      }
  }
  DecoderResult quiet = decoder_forward(ctx, q, p, c, false);
  CHECK(quiet.self_attn.empty());
  CHECK(quiet.Z.data() == res.Z.data());
}

TEST_CASE("cross decoder encodes context then cross-attends into it") {
  ModelConfig c = tiny_config();
  c.attn_variant = AttnVariant::cross;
  c.d_model = 16;
  c.n_heads = 2;
  c.H = 4;
  c.F = 3;
  c.M = 2;
  c.L = 2;
  ModelParams p = init_params(c, 21);
  Tensor ctx = embed_context(rnd({4, 3}, 1), rnd({4, 2, 3}, 2), p, c);
  Tensor q = build_queries(p, c);
  DecoderResult res = decoder_forward(ctx, q, p, c, true);
  CHECK(res.Z.shape() == Shape{6, 16});
  REQUIRE(res.enc_attn.size() == 2);
  REQUIRE(res.self_attn.size() == 2);
  REQUIRE(res.cross_attn.size() == 2);
  CHECK(res.enc_attn[0].shape() == Shape{2, 8, 8});
  CHECK(res.self_attn[0].shape() == Shape{2, 6, 6});
  CHECK(res.cross_attn[0].shape() == Shape{2, 6, 8});
  for (std::size_t h = 0; h < 2; ++h)
    for (std::size_t r = 0; r < 6; ++r) {
      double sum = 0.0;
      for (std::size_t col = 0; col < 8; ++col)
        sum += res.cross_attn[0].data()[(h * 6 + r) * 8 + col];
      CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
    }
}

TEST_CASE("zero weights make the decoder an identity over the queries") {
  for (AttnVariant attn : {AttnVariant::unified, AttnVariant::cross}) {
    for (NormVariant norm : {NormVariant::rmsnorm, NormVariant::layernorm}) {
      ModelConfig c = tiny_config();
      c.attn_variant = attn;
      c.norm_variant = norm;
      ModelParams p = init_params(c, 2);
      fill_all(p, c, 0.0);
      Tensor ctx = embed_context(rnd({c.H, 3}, 1), rnd({c.H, c.M, 3}, 2), p, c);
      Tensor q = build_queries(p, c);
      DecoderResult res = decoder_forward(ctx, q, p, c, false);
      REQUIRE(res.Z.shape() == q.shape());
      CHECK(res.Z.data() == q.data());

      ProposalSet out = prediction_heads(res.Z, p, c);
      for (double v : out.traj.data()) CHECK(v == 0.0);
      for (double v : out.pose.data()) CHECK(v == 0.0);
    }
  }
}

TEST_CASE("prediction heads split decoded rows into K branches per stream") {
  ModelConfig c = tiny_config();
  c.d_model = 16;
  c.n_heads = 4;
  c.F = 10;
  c.M = 3;
  c.K = 4;
  ModelParams p = init_params(c, 13);
  Tensor z = rnd({20, 16}, 99);
  ProposalSet out = prediction_heads(z, p, c);
  CHECK(out.traj.shape() == Shape{4, 10, 3});
  CHECK(out.pose.shape() == Shape{4, 10, 3, 3});

  CHECK_THROWS_AS(prediction_heads(rnd({10, 16}, 1), p, c), ShapeError);

  // a branch's trajectory must depend only on its own columns of the split
  for (double& w : p.traj_split.W.mutable_data()) w = 0.0;
  for (double& b : p.traj_split.b.mutable_data()) b = 0.0;
  // leave branch 2's bias columns alive
  for (std::size_t col = 2 * 3; col < 3 * 3; ++col) p.traj_split.b.mutable_data()[col] = 1.0;
  ProposalSet probe = prediction_heads(z, p, c);
  bool branch2_nonzero = false;
  for (std::size_t i = 0; i < 10 * 3; ++i) {
    CHECK(probe.traj.data()[0 * 30 + i] == probe.traj.data()[1 * 30 + i]);  // both all-bias
    branch2_nonzero = branch2_nonzero ||
                      probe.traj.data()[2 * 30 + i] != probe.traj.data()[0 * 30 + i];
  }
  CHECK(branch2_nonzero);
}

TEST_CASE("forward pass produces the contracted proposal shapes") {
  ModelConfig c = tiny_config();  // L=1 d=8 H=2 F=2 M=2 K=2 joint
  ModelParams p = init_params(c, 31);
  NormalizedSample s = sample_for(c, 7);
  ProposalSet out = model_forward(s, p, c);
  CHECK(out.traj.shape() == Shape{2, 2, 3});
  CHECK(out.pose.shape() == Shape{2, 2, 2, 3});

  // repeated evaluation is bit-identical
  ProposalSet again = model_forward(s, p, c);
  CHECK(out.traj.data() == again.traj.data());
  CHECK(out.pose.data() == again.pose.data());
}

TEST_CASE("strict forward rejects task mismatches; routing serves sub-tasks") {
  ModelConfig c = tiny_config();
  ModelParams p = init_params(c, 17);
  NormalizedSample joint_sample = sample_for(c, 3);

  NormalizedSample pose_sample = joint_sample;
  pose_sample.task = TaskMode::pose_only;
  pose_sample.T_past = Tensor{};
  pose_sample.gt_traj = Tensor{};
  CHECK_THROWS_WITH_AS(model_forward(pose_sample, p, c), doctest::Contains("pose_only"),
                       ConfigError);

  // joint model serving a single-stream task via its type flag
  ProposalSet traj_out = model_forward_routed(joint_sample, p, c, TaskMode::traj_only);
  CHECK(traj_out.traj.shape() == Shape{2, 2, 3});
  CHECK_FALSE(traj_out.pose.defined());
  ProposalSet pose_out = model_forward_routed(pose_sample, p, c, TaskMode::pose_only);
  CHECK_FALSE(pose_out.traj.defined());
  CHECK(pose_out.pose.shape() == Shape{2, 2, 2, 3});

  // single-stream model cannot serve the joint task
  ModelConfig traj_cfg = c;
  traj_cfg.task_mode = TaskMode::traj_only;
  ModelParams pt = init_params(traj_cfg, 17);
  CHECK_THROWS_AS(model_forward_routed(joint_sample, pt, traj_cfg, TaskMode::joint), ConfigError);
  // sample without a pose stream cannot feed a pose route
  NormalizedSample traj_sample = joint_sample;
  traj_sample.task = TaskMode::traj_only;
  traj_sample.P_past = Tensor{};
  traj_sample.gt_pose = Tensor{};
  CHECK_THROWS_AS(model_forward_routed(traj_sample, p, c, TaskMode::pose_only), DataError);

  // routed joint equals the strict forward
  ProposalSet strict = model_forward(joint_sample, p, c);
  ProposalSet routed = model_forward_routed(joint_sample, p, c, TaskMode::joint);
  CHECK(strict.traj.data() == routed.traj.data());
  CHECK(strict.pose.data() == routed.pose.data());
}

TEST_CASE("full model gradient matches finite differences") {
  ModelConfig c;
  c.L = 1;
  c.d_model = 4;
  c.n_heads = 2;
  c.ffn_mult = 2;
  c.H = 2;
  c.F = 2;
  c.M = 1;
  c.K = 2;
  c.task_mode = TaskMode::joint;
  ModelParams p = init_params(c, 77);
  NormalizedSample s = sample_for(c, 5);
  std::vector<Tensor> params = collect_params(p, c);
  GradcheckResult r = gradcheck(
      [&]() {
        ProposalSet out = model_forward(s, p, c);
        return wta_loss(s, out, WtaWeights{}).loss;
      },
      params, 1e-5);
  CHECK(r.max_rel_err < 1e-4);
}

TEST_CASE("checkpoints round-trip bit-exactly") {
  ModelConfig c = tiny_config();
  c.attn_variant = AttnVariant::cross;
  c.norm_variant = NormVariant::layernorm;
  ModelParams p = init_params(c, 1234);
  const std::string prefix = "ckpt_roundtrip_test";
  save_checkpoint(prefix, p, c);

  Checkpoint got = load_checkpoint(prefix);
  CHECK(got.config.L == c.L);
  CHECK(got.config.task_mode == c.task_mode);
  CHECK(got.config.attn_variant == c.attn_variant);
  CHECK(got.config.norm_variant == c.norm_variant);
  std::vector<Tensor> orig = collect_params(p, c);
  std::vector<Tensor> back = collect_params(got.params, got.config);
  REQUIRE(orig.size() == back.size());
  for (std::size_t i = 0; i < orig.size(); ++i) {
    CHECK(orig[i].shape() == back[i].shape());
    CHECK(orig[i].data() == back[i].data());
  }

  std::ifstream manifest_in(prefix + ".json");
  nlohmann::json manifest;
  manifest_in >> manifest;
  CHECK(manifest["version"] == "simplihumon-ckpt-v1");
  CHECK(manifest["dtype"] == "f64");
  // offsets are contiguous in visitation order
  std::size_t expect_offset = 0;
  for (const auto& e : manifest["params"]) {
    CHECK(e["offset"].get<std::size_t>() == expect_offset);
    expect_offset += e["nbytes"].get<std::size_t>();
  }
  std::remove((prefix + ".json").c_str());
  std::remove((prefix + ".blob").c_str());
}

TEST_CASE("loader widens single-precision blobs") {
  ModelConfig c = tiny_config();
  ModelParams p = init_params(c, 55);
  const std::string prefix = "ckpt_f32_test";

  nlohmann::ordered_json entries = nlohmann::ordered_json::array();
  std::ofstream blob(prefix + ".blob", std::ios::binary);
  std::size_t offset = 0;
  visit_params(p, c, [&](const std::string& name, Tensor& t) {
    entries.push_back({{"name", name},
                       {"shape", t.shape()},
                       {"dtype", "f32"},
                       {"offset", offset},
                       {"nbytes", t.numel() * 4}});
    for (double v : t.data()) {
      float f = static_cast<float>(v);
      blob.write(reinterpret_cast<const char*>(&f), 4);
    }
    offset += t.numel() * 4;
  });
  blob.close();
  nlohmann::ordered_json manifest{{"version", "simplihumon-ckpt-v1"},
                                  {"dtype", "f32"},
                                  {"blob", prefix + ".blob"},
                                  {"config", config_to_json(c)},
                                  {"params", entries}};
  std::ofstream mout(prefix + ".json");
  mout << manifest.dump(2) << "\n";
  mout.close();

  Checkpoint got = load_checkpoint(prefix);
  std::vector<Tensor> orig = collect_params(p, c);
  std::vector<Tensor> back = collect_params(got.params, got.config);
  REQUIRE(orig.size() == back.size());
  for (std::size_t i = 0; i < orig.size(); ++i)
    for (std::size_t j = 0; j < orig[i].numel(); ++j)
      CHECK(back[i].data()[j] == doctest::Approx(orig[i].data()[j]).epsilon(1e-6));
  std::remove((prefix + ".json").c_str());
  std::remove((prefix + ".blob").c_str());
}

TEST_CASE("loader rejects malformed checkpoints") {
  ModelConfig c = tiny_config();
  ModelParams p = init_params(c, 5);
  const std::string prefix = "ckpt_reject_test";
  save_checkpoint(prefix, p, c);

  nlohmann::json manifest;
  {
    std::ifstream in(prefix + ".json");
    in >> manifest;
  }
  SUBCASE("wrong version") {
    manifest["version"] = "simplihumon-ckpt-v0";
    std::ofstream out(prefix + ".json");
    out << manifest.dump();
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(prefix), doctest::Contains("version"), DataError);
  }
  SUBCASE("truncated blob") {
    std::ofstream out(prefix + ".blob", std::ios::binary | std::ios::trunc);
    out << "short";
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(prefix), doctest::Contains("blob"), DataError);
  }
  SUBCASE("renamed parameter") {
    manifest["params"][0]["name"] = "imposter";
    std::ofstream out(prefix + ".json");
    out << manifest.dump();
    out.close();
    CHECK_THROWS_WITH_AS(load_checkpoint(prefix), doctest::Contains("imposter"), DataError);
  }
  SUBCASE("missing manifest") {
    CHECK_THROWS_AS(load_checkpoint("no_such_prefix_anywhere"), DataError);
  }
  std::remove((prefix + ".json").c_str());
  std::remove((prefix + ".blob").c_str());
}

TEST_CASE("config json round-trips and rejects unknown fields") {
  ModelConfig c = tiny_config();
  c.attn_variant = AttnVariant::cross;
  c.norm_variant = NormVariant::layernorm;
  c.type_embedding_enabled = false;
  ModelConfig back = config_from_json(config_to_json(c));
  CHECK(back.L == c.L);
  CHECK(back.d_model == c.d_model);
  CHECK(back.n_heads == c.n_heads);
  CHECK(back.H == c.H);
  CHECK(back.F == c.F);
  CHECK(back.M == c.M);
  CHECK(back.K == c.K);
  CHECK(back.task_mode == c.task_mode);
  CHECK(back.attn_variant == c.attn_variant);
  CHECK(back.norm_variant == c.norm_variant);
  CHECK(back.type_embedding_enabled == c.type_embedding_enabled);

  nlohmann::json j = config_to_json(c);
  j["d_modl"] = 4;
  CHECK_THROWS_WITH_AS(config_from_json(j), doctest::Contains("d_modl"), ConfigError);
  nlohmann::json bad = config_to_json(c);
  bad["task_mode"] = "trajectory";
  CHECK_THROWS_AS(config_from_json(bad), ConfigError);
  nlohmann::json neg = config_to_json(c);
  neg["L"] = -1;
  CHECK_THROWS_WITH_AS(config_from_json(neg), doctest::Contains("L"), ConfigError);
}
