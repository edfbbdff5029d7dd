#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "clickseg/synth.hpp"

using namespace clickseg;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir(const std::string& name) {
  const fs::path d = fs::temp_directory_path() / ("clickseg_test_synth_" + name);
  fs::remove_all(d);
  fs::create_directories(d);
  return d;
}

const AssetPool& bundled_pool() {
  static const AssetPool pool = AssetPool::load(fs::path(CLICKSEG_TEST_ASSETS) / "fg", fs::path(CLICKSEG_TEST_ASSETS) / "bg");
  return pool;
}

}  // namespace

TEST(Synth, BundledPackLoads) {
  const auto& pool = bundled_pool();
  EXPECT_GE(pool.foregrounds().size(), 32u);
  EXPECT_GE(pool.backgrounds().size(), 8u);
  for (const auto& f : pool.foregrounds()) EXPECT_TRUE(f.color.same_shape(f.alpha)) << f.id;
  EXPECT_THROW(pool.foreground("nope"), Error);
}

TEST(Synth, FullSizePlacementCopiesTheMatte) {
  Rng rng(1);
  ForegroundAsset fg{"f", Image(32, 32), AlphaMatte(32, 32)};
  for (auto& v : fg.color.data()) v = static_cast<float>(rng.uniform());
  for (auto& v : fg.alpha.vec()) v = static_cast<float>(rng.uniform());
  const auto placed = place_foreground(fg, {1.0, 0, 0, false}, 32);
  EXPECT_EQ(placed.alpha, fg.alpha);
  const auto flipped = place_foreground(fg, {1.0, 0, 0, true}, 32);
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) EXPECT_EQ(flipped.alpha.at(y, x), fg.alpha.at(y, 31 - x));
}

TEST(Synth, CompositeIsAffineInBackgroundAndMaskIsBinarizedAlpha) {
  const auto& pool = bundled_pool();
  Rng rng(2);
  for (int t = 0; t < 20; ++t) {
    const auto& fg = pool.foregrounds()[static_cast<std::size_t>(rng.uniform_int(0, pool.foregrounds().size() - 1))];
    const auto& b1 = pool.backgrounds()[static_cast<std::size_t>(rng.uniform_int(0, pool.backgrounds().size() - 1))];
    const auto& b2 = pool.backgrounds()[static_cast<std::size_t>(rng.uniform_int(0, pool.backgrounds().size() - 1))];
    const Placement p = sample_placement(fg, rng, SynthParams{});
    const std::uint64_t seed = rng.next_u64();
    const auto s1 = composite(fg, b1, p, seed, 96);
    const auto s2 = composite(fg, b2, p, seed, 96);
    EXPECT_EQ(s1.mask, binarize(s1.alpha, 0.5));
    EXPECT_GT(count_foreground(s1.mask), 0u);
    const Image w1 = background_window(b1.image, 96, seed), w2 = background_window(b2.image, 96, seed);
    for (int y = 0; y < 96; ++y)
      for (int x = 0; x < 96; ++x)
        for (int c = 0; c < 3; ++c) {
          const double lhs = s1.image.at(y, x, c) - s2.image.at(y, x, c);
          const double rhs = (1.0 - s1.alpha.at(y, x)) * (w1.at(y, x, c) - w2.at(y, x, c));
          ASSERT_NEAR(lhs, rhs, 1e-6);
        }
  }
}

TEST(Synth, OpaqueRegionsIgnoreTheBackground) {
  const auto& pool = bundled_pool();
  const auto& fg = pool.foregrounds().front();
  Rng rng(3);
  const Placement p = sample_placement(fg, rng, SynthParams{});
  const auto s = composite(fg, pool.backgrounds()[0], p, 5);
  const auto placed = place_foreground(fg, p, 96);
  for (int y = 0; y < 96; ++y)
    for (int x = 0; x < 96; ++x) {
      if (s.alpha.at(y, x) == 1.0f) EXPECT_NEAR(s.image.at(y, x, 0), placed.color.at(y, x, 0), 1e-7);
      if (s.alpha.at(y, x) == 0.0f)
        EXPECT_NEAR(s.image.at(y, x, 0), background_window(pool.backgrounds()[0].image, 96, 5).at(y, x, 0), 1e-7);
    }
}

TEST(Synth, PlacementsFitAndRejectBadScales) {
  const auto& fg = bundled_pool().foregrounds()[1];
  Rng rng(4);
  for (int t = 0; t < 50; ++t) {
    const Placement p = sample_placement(fg, rng, SynthParams{});
    const auto [fh, fw] = scaled_extent(fg, p.scale, 96);
    EXPECT_GE(p.dx, 0);
    EXPECT_LE(p.dx + fw, 96);
    EXPECT_LE(p.dy + fh, 96);
  }
  SynthParams bad;
  bad.scale_min = 0.9;
  bad.scale_max = 0.5;
  EXPECT_THROW(sample_placement(fg, rng, bad), Error);
  EXPECT_THROW(composite(fg, bundled_pool().backgrounds()[0], {1.0, 10, 0, false}, 1), Error);
  ForegroundAsset empty{"e", Image(8, 8), AlphaMatte(8, 8)};
  EXPECT_THROW(sample_placement(empty, rng, SynthParams{}), Error);
}

TEST(Manifest, LineRoundTrip) {
  Rng rng(5);
  for (int t = 0; t < 50; ++t) {
    ManifestEntry e{"fg_" + std::to_string(t), "bg_x", {rng.uniform(0.1, 1.0), t, 2 * t, t % 2 == 0}, rng.next_u64()};
    EXPECT_EQ(parse_manifest_line(manifest_line(e)), e);
  }
  EXPECT_THROW(parse_manifest_line("{\"fg\":1}"), Error);
  EXPECT_THROW(parse_manifest_line("garbage"), Error);
}

TEST(Manifest, GenerationIsDeterministicAndFileRoundTrips) {
  const auto& pool = bundled_pool();
  const auto a = generate_manifest(pool.foregrounds(), pool.backgrounds(), 12, 9);
  const auto b = generate_manifest(pool.foregrounds(), pool.backgrounds(), 12, 9);
  const auto c = generate_manifest(pool.foregrounds(), pool.backgrounds(), 12, 10);
  EXPECT_EQ(a, b);
  EXPECT_NE(a, c);
  const auto dir = temp_dir("manifest");
  write_manifest(a, dir / "m.jsonl");
  EXPECT_EQ(read_manifest(dir / "m.jsonl"), a);
  EXPECT_THROW(read_manifest(dir / "missing.jsonl"), Error);
}

TEST(Manifest, RenderedDatasetMatchesInMemoryRender) {
  const auto& pool = bundled_pool();
  const auto entries = generate_manifest(pool.foregrounds(), pool.backgrounds(), 3, 11);
  const auto dir = temp_dir("render");
  render_dataset(pool, entries, dir);
  for (std::size_t i = 0; i < entries.size(); ++i) {
    const auto s = pool.render(entries[i]);
    const std::string id = sample_id(i);
    EXPECT_EQ(load_binary_mask(dir / "masks" / (id + ".png")), s.mask);
    const Image im = load_image(dir / "images" / (id + ".png"));
    for (std::size_t k = 0; k < im.data().size(); ++k) ASSERT_NEAR(im.data()[k], s.image.data()[k], 0.5 / 255 + 1e-6);
  }
  EXPECT_NE(sample_id(3), sample_id(30));
}

TEST(AssetPack, ProceduralPackIsDeterministic) {
  const auto a = make_procedural_foregrounds(4, 48, 3), b = make_procedural_foregrounds(4, 48, 3);
  ASSERT_EQ(a.size(), 4u);
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].id, b[i].id);
    EXPECT_EQ(a[i].alpha, b[i].alpha);
    EXPECT_EQ(a[i].color, b[i].color);
    EXPECT_GT(count_foreground(binarize(a[i].alpha, 0.5)), 0u);
  }
  const auto bg = make_procedural_backgrounds(3, 48, 3);
  EXPECT_EQ(bg.size(), 3u);
  const auto dir = temp_dir("pack");
  write_asset_pack(dir, 2, 2, 32, 1);
  const auto pool = AssetPool::load(dir / "fg", dir / "bg");
  EXPECT_EQ(pool.foregrounds().size(), 2u);
  EXPECT_EQ(pool.backgrounds().size(), 2u);
}
