#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "hmtl/io/checkpoint.hpp"
#include "hmtl/model.hpp"

using namespace hmtl;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("hmtl_ckpt_" + name + "_" + std::to_string(::getpid()));
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

ModelConfig mini(std::optional<SslSpec> ssl = std::nullopt, std::size_t width = 4) {
  ModelConfig cfg;
  cfg.backbone = nn::BackboneSpec::mini(width);
  cfg.input_size = 64;
  cfg.ssl = ssl;
  return cfg;
}

}  // namespace

TEST(Checkpoint, RoundTripIsBitExact) {
  const auto dir = temp_dir("roundtrip");
  Model m = build_model(mini(SslSpec{}), 1);
  Checkpoint ck = snapshot(m.tensors());
  ck.metadata = {{"mode", "hmtl"}, {"seed", 1}, {"epoch", 3}};
  ck.stages = {"stage1", "stage2", "stage3", "stage4"};
  ck.heads = m.supervised_output_names();
  save_checkpoint(dir / "a.ckpt", ck);
  EXPECT_FALSE(fs::exists(dir / "a.ckpt.tmp"));
  const auto back = load_checkpoint(dir / "a.ckpt");
  EXPECT_EQ(back.metadata, ck.metadata);
  EXPECT_EQ(back.stages, ck.stages);
  EXPECT_EQ(back.heads, ck.heads);
  ASSERT_EQ(back.tensors.size(), ck.tensors.size());
  for (std::size_t i = 0; i < ck.tensors.size(); ++i) {
    EXPECT_EQ(back.tensors[i].name, ck.tensors[i].name);
    EXPECT_EQ(back.tensors[i].buffer, ck.tensors[i].buffer);
    EXPECT_EQ(back.tensors[i].value, ck.tensors[i].value);
  }

  Model other = build_model(mini(SslSpec{}), 2);
  restore(back, other.tensors());
  const auto a = m.tensors(), b = other.tensors();
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(*a[i].value, *b[i].value) << a[i].name;
  fs::remove_all(dir);
}

TEST(Checkpoint, LoadErrors) {
  const auto dir = temp_dir("errors");
  EXPECT_THROW(load_checkpoint(dir / "missing.ckpt"), LoadError);
  {
    std::ofstream(dir / "junk.ckpt") << "not a checkpoint";
  }
  EXPECT_THROW(load_checkpoint(dir / "junk.ckpt"), LoadError);

  Checkpoint ck;
  ck.tensors.push_back({"w", false, Tensor({2, 2}, 1.0f)});
  save_checkpoint(dir / "ok.ckpt", ck);
  // bump the version field
  {
    std::fstream f(dir / "ok.ckpt", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(8);
    const std::uint32_t v = 99;
    f.write(reinterpret_cast<const char*>(&v), sizeof v);
  }
  EXPECT_THROW(load_checkpoint(dir / "ok.ckpt"), CheckpointIncompatible);

  save_checkpoint(dir / "trunc.ckpt", ck);
  fs::resize_file(dir / "trunc.ckpt", fs::file_size(dir / "trunc.ckpt") - 4);
  EXPECT_THROW(load_checkpoint(dir / "trunc.ckpt"), LoadError);
  fs::remove_all(dir);
}

TEST(Checkpoint, RestoreRejectsMismatchAtomically) {
  Model a = build_model(mini(), 3);
  Model b = build_model(mini(std::nullopt, 2), 4);
  const Checkpoint ck = snapshot(a.tensors());
  const Checkpoint before = snapshot(b.tensors());
  EXPECT_THROW(restore(ck, b.tensors()), CheckpointIncompatible);
  const Checkpoint after = snapshot(b.tensors());
  for (std::size_t i = 0; i < before.tensors.size(); ++i) EXPECT_EQ(before.tensors[i].value, after.tensors[i].value);

  Checkpoint partial = ck;
  partial.tensors.pop_back();
  Model c = build_model(mini(), 5);
  EXPECT_THROW(restore(partial, c.tensors()), CheckpointIncompatible);
}

TEST(TransferBackbone, IntoSupervisedAndMultiTaskModels) {
  auto cfg = mini();
  cfg.projector = ProjectorSpec{.width = 32};
  BTEncoder enc = build_bt_encoder(cfg, 6);
  // perturb so the source differs from any fresh initialization
  for (auto& r : enc.tensors())
    for (auto& v : r.value->values()) v += 0.01f;
  const Checkpoint ck = snapshot(enc.tensors(), "backbone.");
  for (const auto& t : ck.tensors) EXPECT_EQ(t.name.rfind("backbone.", 0), 0u);

  for (auto ssl : {std::optional<SslSpec>{}, std::optional<SslSpec>{SslSpec{.task = PretextTask::puzzle_rotation}}}) {
    Model m = build_model(mini(ssl), 7);
    const Checkpoint heads_before = snapshot(m.tensors());
    transfer_backbone_weights(ck, m);
    for (const auto& r : m.tensors()) {
      if (r.name.rfind("backbone.", 0) == 0) {
        EXPECT_EQ(*r.value, ck.find(r.name)->value) << r.name;
      } else {
        EXPECT_EQ(*r.value, heads_before.find(r.name)->value) << r.name;
      }
    }
  }
}

TEST(TransferBackbone, MismatchedWidthsAreIncompatible) {
  Model src = build_model(mini(std::nullopt, 4), 8);
  Model dst = build_model(mini(std::nullopt, 2), 9);
  EXPECT_THROW(transfer_backbone_weights(snapshot(src.tensors(), "backbone."), dst), CheckpointIncompatible);
  auto deeper = mini();
  deeper.backbone.blocks = {2, 1, 1, 1};
  Model d = build_model(deeper, 10);
  EXPECT_THROW(transfer_backbone_weights(snapshot(src.tensors(), "backbone."), d), CheckpointIncompatible);
}
