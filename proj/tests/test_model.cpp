// Copyright 2026 The CTNet Authors.
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "ctnet/features/synth.hpp"
#include "ctnet/model/checkpoint.hpp"
#include "ctnet/model/grad_suite.hpp"

namespace ctnet {
namespace {

SynthConfig small_synth() {
  SynthConfig c;
  c.users = 60;
  c.items = 40;
  c.item_categories = 5;
  c.user_groups = 4;
  c.periods = 2;
  c.source_per_period = 1500;
  c.target_per_period = 1000;
  c.sequence_max_len = 6;
  c.embedding_dim = 4;
  c.seed = 17;
  return c;
}

struct Fixture {
  SynthData data = synth_generate(small_synth());
  FeatureSchema schema = data.schema;
  FeatureSchema src_schema = schema.without({kTargetOnlyField});
  TowerConfig tower{{8, 6, 4}, 2, 3};
  RngStream rng{5};
  SingleDomainModel source{src_schema, tower, schema, rng};
  SingleDomainModel target{schema, tower, schema, rng};

  std::span<const Record> records() const { return data.target[0].records; }
  std::span<const Record> source_records() const { return data.source[0].records; }
};

std::vector<double> logits_of(const AnyModel& m, std::span<const Record> rs) {
  return std::visit([&](const auto& x) { return predict_logits(x, rs); }, m);
}

TEST(SingleDomain, AllZeroWeightsGiveLogitZero) {
  Fixture f;
  f.target.for_each_parameter([](Parameter& p) { p.value.fill(0.0); });
  for (double z : predict_logits(f.target, f.records().first(50))) EXPECT_EQ(z, 0.0);
}

TEST(SingleDomain, ForwardIsDeterministic) {
  Fixture f;
  EXPECT_EQ(predict_logits(f.target, f.records()), predict_logits(f.target, f.records()));
  RngStream a(3), b(3);
  SingleDomainModel m1(f.schema, f.tower, f.schema, a);
  SingleDomainModel m2(f.schema, f.tower, f.schema, b);
  EXPECT_EQ(predict_logits(m1, f.records()), predict_logits(m2, f.records()));
}

// Hand evaluation of embeddings -> two ReLU layers -> head, empty history.
TEST(SingleDomain, TwoLayerMatchesScalarOracle) {
  FeatureSchema s = toy_schema();
  RngStream rng(1);
  SingleDomainModel m(s, TowerConfig{{3, 2}, 1, 2}, s, rng);
  m.for_each_parameter([&](Parameter& p) {
    for (double& x : p.value.data()) x = rng.normal(0.0, 0.8);
  });
  Record r;
  r.cats = {2, 5, 1, 0};
  std::vector<double> e;
  for (std::size_t i = 0; i < 4; ++i) {
    for (double x : m.tables()[i].lookup(r.cats[i])) e.push_back(x);
  }
  e.push_back(0.0);  // attention output over an empty history
  e.push_back(0.0);
  ASSERT_EQ(e.size(), m.input_dim());
  auto layer = [](const DenseLayer& d, const std::vector<double>& in) {
    std::vector<double> out(d.w.rows());
    for (std::size_t i = 0; i < out.size(); ++i) {
      double s = d.b.value(i, 0);
      for (std::size_t j = 0; j < in.size(); ++j) s += d.w.value(i, j) * in[j];
      out[i] = s > 0 ? s : 0.0;
    }
    return out;
  };
  const auto z1 = layer(m.layers()[0], e);
  const auto z2 = layer(m.layers()[1], z1);
  double logit = m.head().b.value(0, 0);
  for (std::size_t j = 0; j < z2.size(); ++j) logit += m.head().w.value(0, j) * z2[j];
  EXPECT_NEAR(m.forward(r), logit, 1e-12);
}

TEST(SingleDomain, LossDecreasesOverFiftySteps) {
  Fixture f;
  const auto batch = f.records().first(256);
  const double before = detail::batch_loss(f.target, batch, false);
  for (int i = 0; i < 50; ++i) train_step(f.target, batch, 0.05);
  EXPECT_LT(detail::batch_loss(f.target, batch, false), before);
}

TEST(SingleDomain, WithInputsPreservesFunction) {
  Fixture f;
  train_stream(f.target, f.records(), 128, 0.01);
  AuxTable aux{f.source.table("user_id"), "user_id", 0};
  RngStream rng(8);
  const SingleDomainModel ext = f.target.with_inputs(f.schema, {aux}, f.schema, rng);
  EXPECT_EQ(ext.input_dim(), f.target.input_dim() + aux.table.dim());
  EXPECT_EQ(predict_logits(ext, f.records()), predict_logits(f.target, f.records()));
}

TEST(CTNet, DepthMismatchIsRejected) {
  Fixture f;
  RngStream rng(2);
  SingleDomainModel shallow(f.src_schema, TowerConfig{{8, 4}, 2, 3}, f.schema, rng);
  EXPECT_THROW(warm_start(f.target, shallow, AdapterKind::Glu, rng), ValidationError);
}

class WarmStart : public ::testing::TestWithParam<AdapterKind> {};

TEST_P(WarmStart, BitwiseIdentityOnThousandRecords) {
  Fixture f;
  train_stream(f.target, f.records(), 128, 0.01);
  train_stream(f.source, f.source_records(), 256, 0.01);
  ASSERT_GE(f.records().size(), 1000u);
  const CTNetModel m = warm_start(f.target, f.source, GetParam(), f.rng);
  EXPECT_EQ(predict_logits(m, f.records().first(1000)), predict_logits(f.target, f.records().first(1000)));
}

TEST_P(WarmStart, TrainableFlagsAndInitialValues) {
  Fixture f;
  CTNetModel m = warm_start(f.target, f.source, GetParam(), f.rng);
  m.for_each_named_parameter([&](const std::string& name, Parameter& p) {
    const bool is_source = name.rfind("source/", 0) == 0;
    EXPECT_EQ(p.trainable, !is_source) << name;
  });
  ASSERT_EQ(m.adapters().levels.size(), f.tower.widths.size() + 1);
  double sq = 0;
  std::size_t n = 0;
  for (const auto& a : m.adapters().levels) {
    for (double x : a.u1.value.data()) EXPECT_EQ(x, 0.0);
    if (GetParam() == AdapterKind::Glu) {
      for (double x : a.u2.value.data()) {
        sq += x * x;
        ++n;
      }
    } else {
      EXPECT_EQ(a.u2.value.size(), 0u);
    }
  }
  if (GetParam() == AdapterKind::Glu) {
    const double sd = std::sqrt(sq / static_cast<double>(n));
    EXPECT_GT(sd, 0.5e-3);
    EXPECT_LT(sd, 2e-3);
  }
}

TEST_P(WarmStart, SourceStaysBitIdenticalAndGatesLearn) {
  Fixture f;
  CTNetModel m = warm_start(f.target, f.source, GetParam(), f.rng);
  const SingleDomainModel before = m.source();
  const auto batch = f.records().first(256);
  for (int i = 0; i < 100; ++i) train_step(m, batch, 0.01);
  std::vector<std::pair<std::string, Tensor2D>> a, b;
  before.visit_parameters([&](const Parameter& p) { a.emplace_back(p.name, p.value); });
  m.source().visit_parameters([&](const Parameter& p) { b.emplace_back(p.name, p.value); });
  EXPECT_EQ(a, b);
  bool moved = false;
  for (const auto& l : m.adapters().levels) {
    for (double x : l.u1.value.data()) moved = moved || x != 0.0;
  }
  EXPECT_TRUE(moved);
}

TEST_P(WarmStart, RefreshSource) {
  Fixture f;
  CTNetModel m = warm_start(f.target, f.source, GetParam(), f.rng);
  for (int i = 0; i < 20; ++i) train_step(m, f.records().first(256), 0.01);
  const auto base = predict_logits(m, f.records().first(300));

  CTNetModel same = m;
  same.refresh_source(f.source);
  EXPECT_EQ(predict_logits(same, f.records().first(300)), base);

  SingleDomainModel newer = f.source;
  train_stream(newer, f.source_records(), 256, 0.05);
  CTNetModel refreshed = m;
  refreshed.refresh_source(newer);
  EXPECT_NE(predict_logits(refreshed, f.records().first(300)), base);
  refreshed.for_each_named_parameter([](const std::string& name, Parameter& p) {
    if (name.rfind("source/", 0) == 0) EXPECT_FALSE(p.trainable) << name;
  });

  RngStream rng(4);
  SingleDomainModel other(f.src_schema, TowerConfig{{8, 5, 4}, 2, 3}, f.schema, rng);
  EXPECT_THROW(m.refresh_source(other), ValidationError);
}

INSTANTIATE_TEST_SUITE_P(Kinds, WarmStart, ::testing::Values(AdapterKind::Glu, AdapterKind::Linear),
                         [](const auto& info) { return to_string(info.param); });

TEST(CTNet, LinearZeroMatchesGluZero) {
  Fixture f;
  train_stream(f.target, f.records(), 128, 0.01);
  RngStream a(1), b(1);
  const CTNetModel glu = warm_start(f.target, f.source, AdapterKind::Glu, a);
  const CTNetModel lin = warm_start(f.target, f.source, AdapterKind::Linear, b);
  EXPECT_EQ(predict_logits(glu, f.records()), predict_logits(lin, f.records()));
}

TEST(CTNet, ShareSequenceToggleChangesOnlyWhenWeightsDiffer) {
  Fixture f;
  // Same attention output width on both towers makes sharing legal.
  CTNetModel m = warm_start(f.target, f.source, AdapterKind::Glu, f.rng, true);
  EXPECT_TRUE(m.share_sequence());
  CTNetModel plain = m;
  plain.set_share_sequence(false);
  EXPECT_NE(predict_logits(m, f.records().first(200)), predict_logits(plain, f.records().first(200)));
}

TEST(GradSuite, AllModelsWithinTolerance) {
  for (const auto& r : run_grad_suite(1e-4)) {
    EXPECT_TRUE(r.report.passed()) << r.model << " max_rel_error=" << r.report.max_rel_error();
    EXPECT_LT(r.report.max_rel_error(), 1e-4) << r.model;
  }
}

// ----- checkpoints -----

std::vector<AnyModel> trained_models(Fixture& f) {
  train_stream(f.target, f.records(), 128, 0.01);
  round_to_storage(f.target);
  CTNetModel c = warm_start(f.target, f.source, AdapterKind::Glu, f.rng);
  train_stream(c, f.records(), 128, 0.01);
  round_to_storage(c);
  CTNetModel lin = warm_start(f.target, f.source, AdapterKind::Linear, f.rng);
  round_to_storage(lin);
  return {f.target, c, lin};
}

TEST(Checkpoint, RoundTripIsByteIdenticalAndBitwiseForward) {
  Fixture f;
  for (const AnyModel& m : trained_models(f)) {
    const std::string bytes = encode_checkpoint(m);
    const AnyModel back = decode_checkpoint(bytes);
    EXPECT_EQ(encode_checkpoint(back), bytes);
    EXPECT_EQ(logits_of(back, f.records()), logits_of(m, f.records()));
  }
}

TEST(Checkpoint, FileRoundTrip) {
  Fixture f;
  const auto models = trained_models(f);
  const auto path = (std::filesystem::temp_directory_path() / "ctnet_model_test.ckpt").string();
  save_checkpoint(models[1], path);
  const AnyModel back = load_checkpoint(path);
  ASSERT_TRUE(std::holds_alternative<CTNetModel>(back));
  EXPECT_EQ(std::get<CTNetModel>(back).kind(), AdapterKind::Glu);
  EXPECT_EQ(logits_of(back, f.records()), logits_of(models[1], f.records()));
  std::filesystem::remove(path);
  EXPECT_THROW(load_checkpoint(path), CheckpointError);
}

TEST(Checkpoint, EveryTruncationFails) {
  FeatureSchema s = toy_schema();
  RngStream rng(3);
  SingleDomainModel src(s.without({"slot"}), toy_tower(), s, rng);
  SingleDomainModel tgt(s, toy_tower(), s, rng);
  const std::string bytes = encode_checkpoint(warm_start(tgt, src, AdapterKind::Glu, rng));
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    EXPECT_THROW(decode_checkpoint(std::string_view(bytes).substr(0, n)), CheckpointError) << "prefix " << n;
  }
  EXPECT_THROW(decode_checkpoint(bytes + "x"), CheckpointError);
}

TEST(Checkpoint, CorruptHeadersAreRejected) {
  FeatureSchema s = toy_schema();
  RngStream rng(3);
  const std::string bytes = encode_checkpoint(SingleDomainModel(s, toy_tower(), s, rng));
  std::string bad_magic = bytes;
  bad_magic[0] = 'X';
  EXPECT_THROW(decode_checkpoint(bad_magic), CheckpointError);
  std::string bad_version = bytes;
  bad_version[4] = static_cast<char>(kCheckpointVersion + 1);
  try {
    (void)decode_checkpoint(bad_version);
    FAIL() << "expected CheckpointError";
  } catch (const CheckpointError& e) {
    EXPECT_NE(std::string(e.what()).find("version"), std::string::npos) << e.what();
  }
  // Inflate the metadata length so every later read runs off the end.
  std::string bad_len = bytes;
  bad_len[6] = static_cast<char>(0xff);
  bad_len[7] = static_cast<char>(0xff);
  EXPECT_THROW(decode_checkpoint(bad_len), CheckpointError);
}

TEST(Checkpoint, StorageRoundingIsIdempotent) {
  Fixture f;
  train_stream(f.target, f.records(), 128, 0.01);
  round_to_storage(f.target);
  const std::string once = encode_checkpoint(f.target);
  round_to_storage(f.target);
  EXPECT_EQ(encode_checkpoint(f.target), once);
}

}  // namespace
}  // namespace ctnet
