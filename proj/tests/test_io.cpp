#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <set>

#include "ocfr/dataset.hpp"
#include "ocfr/io/manifest.hpp"
#include "ocfr/io/npy.hpp"
#include "ocfr/io/png.hpp"
#include "ocfr/io/volume.hpp"
#include "ocfr/nn/checkpoint.hpp"

using namespace ocfr;
using namespace ocfr::io;
namespace fs = std::filesystem;

namespace {

class TempDir {
 public:
  TempDir() {
    path_ = fs::temp_directory_path() / ("ocfr_io_" + std::to_string(::testing::UnitTest::GetInstance()->random_seed()) + "_" +
                                         ::testing::UnitTest::GetInstance()->current_test_info()->name());
    fs::remove_all(path_);
    fs::create_directories(path_);
  }
  ~TempDir() { fs::remove_all(path_); }
  const fs::path& path() const { return path_; }
  fs::path operator/(const std::string& s) const { return path_ / s; }

 private:
  fs::path path_;
};

void write_bytes(const fs::path& p, const std::string& bytes) {
  std::ofstream(p, std::ios::binary) << bytes;
}

std::string read_bytes(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), {}};
}

}  // namespace

TEST(Png, EightAndSixteenBitRoundTrip) {
  TempDir tmp;
  Rng rng(1);
  Grid<std::uint8_t> a(7, 11);
  for (auto& v : a.values()) v = static_cast<std::uint8_t>(rng.below(256));
  write_png(tmp / "a.png", a);
  const auto ra = read_png(tmp / "a.png");
  EXPECT_EQ(ra.depth, 8);
  for (std::size_t i = 0; i < a.size(); ++i) EXPECT_EQ(ra.pixels.values()[i], a.values()[i]);

  Grid<std::uint16_t> b(5, 3);
  for (auto& v : b.values()) v = static_cast<std::uint16_t>(rng.below(65536));
  write_png(tmp / "b.png", b);
  const auto rb = read_png(tmp / "b.png");
  EXPECT_EQ(rb.depth, 16);
  EXPECT_EQ(rb.pixels.values(), b.values());
}

TEST(Png, RejectsGarbageAndEmpty) {
  TempDir tmp;
  write_bytes(tmp / "bad.png", "definitely not a png");
  EXPECT_THROW(read_png(tmp / "bad.png"), IoError);
  EXPECT_THROW(read_png(tmp / "missing.png"), IoError);
  EXPECT_THROW(write_png(tmp / "e.png", Grid<std::uint8_t>()), IoError);
  // A valid signature followed by truncated data.
  write_png(tmp / "ok.png", Grid<std::uint8_t>(40, 40, 9));
  const auto bytes = read_bytes(tmp / "ok.png");
  write_bytes(tmp / "trunc.png", bytes.substr(0, 40));
  EXPECT_THROW(read_png(tmp / "trunc.png"), IoError);
}

TEST(Npy, RoundTripAndHeader) {
  TempDir tmp;
  Grid<double> g(3, 4);
  for (std::size_t i = 0; i < g.size(); ++i) g.values()[i] = 0.5 * static_cast<double>(i) - 1;
  write_npy(tmp / "g.npy", g);
  const auto bytes = read_bytes(tmp / "g.npy");
  EXPECT_EQ(bytes.substr(1, 5), "NUMPY");
  EXPECT_EQ((bytes.size() - 12 * 8) % 64, 0u);
  EXPECT_NE(bytes.find("'shape': (3, 4)"), std::string::npos);
  const auto r = read_npy(tmp / "g.npy");
  EXPECT_EQ(r.rows(), 3);
  EXPECT_EQ(r.values(), g.values());
  write_bytes(tmp / "bad.npy", bytes.substr(0, 70));
  EXPECT_THROW(read_npy(tmp / "bad.npy"), IoError);
}

TEST(Volume, InstanceRoundTrip) {
  TempDir tmp;
  OctInstance inst;
  inst.subject_id = "S9";
  inst.finger_id = "F02";
  inst.label = Label::presentation_attack;
  std::vector<AnnotationMask> masks;
  Rng rng(2);
  for (int j = 1; j <= 3; ++j) {
    BScan b{Grid<float>(6, 10), j};
    for (auto& v : b.pixels.values()) v = static_cast<float>(rng.uniform());
    inst.bscans.push_back(b);
    AnnotationMask m{Grid<std::uint8_t>(6, 10)};
    for (auto& v : m.labels.values()) v = static_cast<std::uint8_t>(rng.below(4));
    masks.push_back(m);
  }
  write_instance(tmp / "inst", inst, &masks);
  const InstanceReader r(tmp / "inst");
  EXPECT_EQ(r.size(), 3);
  EXPECT_EQ(r.meta().subject_id, "S9");
  EXPECT_EQ(r.meta().label, Label::presentation_attack);
  EXPECT_TRUE(r.meta().has_masks);
  const auto loaded = r.load();
  for (int j = 0; j < 3; ++j) {
    EXPECT_EQ(loaded.bscans[static_cast<std::size_t>(j)].slice_index, j + 1);
    for (std::size_t i = 0; i < 60; ++i)
      EXPECT_NEAR(loaded.bscans[static_cast<std::size_t>(j)].pixels.values()[i], inst.bscans[static_cast<std::size_t>(j)].pixels.values()[i], 1.0 / 65535);
    EXPECT_EQ(r.mask(j + 1).labels.values(), masks[static_cast<std::size_t>(j)].labels.values());
  }
  EXPECT_THROW(r.bscan(0), InvalidArgument);
  EXPECT_THROW(r.bscan(4), InvalidArgument);
}

TEST(Volume, CorruptSlicesAreNamed) {
  TempDir tmp;
  OctInstance inst;
  for (int j = 1; j <= 2; ++j) inst.bscans.push_back({Grid<float>(4, 5, 0.5f), j});
  std::vector<AnnotationMask> masks(2, AnnotationMask{Grid<std::uint8_t>(4, 5, 1)});
  write_instance(tmp / "inst", inst, &masks);
  const InstanceReader r(tmp / "inst");

  write_png(tmp / "inst" / "mask_0002.png", Grid<std::uint8_t>(4, 5, 9));
  try {
    r.mask(2);
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("mask_0002.png"), std::string::npos);
  }
  write_png(tmp / "inst" / "bscan_0002.png", Grid<std::uint16_t>(4, 6, 1));
  EXPECT_THROW(r.bscan(2), IoError);
  write_png(tmp / "inst" / "bscan_0001.png", Grid<std::uint8_t>(4, 5, 1));
  EXPECT_THROW(r.bscan(1), IoError);
  write_bytes(tmp / "inst" / "meta.json", "{\"n_bscans\": 2}");
  EXPECT_THROW(InstanceReader{tmp / "inst"}, IoError);
}

TEST(Volume, WriterRejectsMixedShapesAndMasks) {
  TempDir tmp;
  InstanceWriter w(tmp / "x", {});
  w.add(BScan{Grid<float>(3, 3)});
  EXPECT_THROW(w.add(BScan{Grid<float>(3, 4)}), ShapeError);
  AnnotationMask m{Grid<std::uint8_t>(3, 3)};
  EXPECT_THROW(w.add(BScan{Grid<float>(3, 3)}, &m), InvalidArgument);
}

TEST(Manifest, RoundTripAndValidation) {
  TempDir tmp;
  const auto m = plan_dataset(DatasetSpec{}, 77);
  save_manifest(tmp / "manifest.json", m);
  const auto r = load_manifest(tmp / "manifest.json");
  ASSERT_EQ(r.entries.size(), m.entries.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    EXPECT_EQ(r.entries[i].id, m.entries[i].id);
    EXPECT_EQ(r.entries[i].seed, m.entries[i].seed);
    EXPECT_EQ(r.entries[i].partition, m.entries[i].partition);
    EXPECT_EQ(r.entries[i].annotated, m.entries[i].annotated);
  }
  EXPECT_EQ(r.root, tmp.path());

  auto dup = m;
  dup.entries.push_back(dup.entries.front());
  EXPECT_THROW(dup.validate(), InvalidArgument);
  auto pa_ref = m;
  pa_ref.entries.front().label = Label::presentation_attack;
  EXPECT_THROW(pa_ref.validate(), InvalidArgument);
  write_bytes(tmp / "bad.json", "{\"version\": 2, \"seed\": 1, \"instances\": []}");
  EXPECT_THROW(load_manifest(tmp / "bad.json"), IoError);
  write_bytes(tmp / "bad2.json", "{not json");
  EXPECT_THROW(load_manifest(tmp / "bad2.json"), IoError);
}

TEST(Dataset, PlansAreDisjointForRandomSpecs) {
  Rng rng(3);
  for (int trial = 0; trial < 100; ++trial) {
    DatasetSpec spec{1 + static_cast<int>(rng.below(5)), 1 + static_cast<int>(rng.below(5)), 1 + static_cast<int>(rng.below(5)),
                     1 + static_cast<int>(rng.below(5)), rng.uniform() < 0.5};
    const auto m = plan_dataset(spec, rng.next_u64());
    ASSERT_EQ(static_cast<int>(m.entries.size()), spec.total());
    std::set<std::string> ids;
    std::set<std::uint64_t> seeds;
    for (const auto& e : m.entries) {
      EXPECT_TRUE(ids.insert(e.id).second);
      EXPECT_TRUE(seeds.insert(e.seed).second);
    }
    EXPECT_EQ(static_cast<int>(m.select(Partition::reference).size()), spec.reference);
    EXPECT_EQ(static_cast<int>(m.select(Partition::train).size()), spec.annotated);
    EXPECT_EQ(static_cast<int>(m.select(Partition::test, Label::presentation_attack).size()), spec.test_pa);
    EXPECT_EQ(static_cast<int>(m.select(Partition::test, Label::bonafide).size()), spec.test_bonafide);
    EXPECT_NO_THROW(m.validate());
  }
}

TEST(Dataset, PlanIsDeterministic) {
  const auto a = plan_dataset(DatasetSpec{}, 5), b = plan_dataset(DatasetSpec{}, 5), c = plan_dataset(DatasetSpec{}, 6);
  EXPECT_EQ(to_json(a), to_json(b));
  EXPECT_NE(to_json(a), to_json(c));
}

TEST(Dataset, AttackArchetypesAlternate) {
  const DatasetSpec spec{1, 1, 4, 1, true};
  const auto m = plan_dataset(spec, 1);
  std::vector<phantom::PaType> types;
  for (std::size_t i = 0; i < m.entries.size(); ++i)
    if (m.entries[i].label == Label::presentation_attack) types.push_back(instance_config(spec, {}, m, i).pa_type);
  EXPECT_EQ(types, (std::vector<phantom::PaType>{phantom::PaType::layered_2d, phantom::PaType::homogeneous_3d,
                                                 phantom::PaType::layered_2d, phantom::PaType::homogeneous_3d}));
}

TEST(Checkpoint, RoundTripPreservesOutputs) {
  TempDir tmp;
  const nn::NetworkConfig cfg{32, 64, 16};
  nn::SegmentationNet<float> net(cfg, 11);
  nn::save_checkpoint(tmp / "n.ckpt", net);
  const auto loaded = nn::load_checkpoint(tmp / "n.ckpt");
  EXPECT_EQ(loaded.config(), cfg);
  Tensor<float> x(1, 3, 32, 64, 0.4f);
  const auto a = net.forward(x), b = loaded.forward(x);
  EXPECT_EQ(a.segmentation().values(), b.segmentation().values());

  const auto bytes = read_bytes(tmp / "n.ckpt");
  write_bytes(tmp / "trunc.ckpt", bytes.substr(0, bytes.size() - 10));
  EXPECT_THROW(nn::load_checkpoint(tmp / "trunc.ckpt"), IoError);
  write_bytes(tmp / "extra.ckpt", bytes + "x");
  EXPECT_THROW(nn::load_checkpoint(tmp / "extra.ckpt"), IoError);
  write_bytes(tmp / "magic.ckpt", "NOTACKPT" + bytes.substr(8));
  EXPECT_THROW(nn::load_checkpoint(tmp / "magic.ckpt"), IoError);
}
