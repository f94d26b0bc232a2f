#include <gtest/gtest.h>

#include <zlib.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <set>

#include "sensprune/data.h"
#include "sensprune/trainer.h"

using namespace sensprune;
namespace fs = std::filesystem;

namespace {

fs::path temp_dir() {
  const fs::path d = fs::temp_directory_path() / "sensprune_test_idx";
  fs::create_directories(d);
  return d;
}

void be32(std::vector<std::uint8_t>& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

// Two 2x2 images: all black and all white; labels 3 and 7.
std::vector<std::uint8_t> image_bytes(std::uint32_t count = 2) {
  std::vector<std::uint8_t> b;
  be32(b, 0x803);
  be32(b, count);
  be32(b, 2);
  be32(b, 2);
  for (int i = 0; i < 4; ++i) b.push_back(0);
  for (int i = 0; i < 4; ++i) b.push_back(255);
  return b;
}

std::vector<std::uint8_t> label_bytes(std::uint32_t count = 2) {
  std::vector<std::uint8_t> b;
  be32(b, 0x801);
  be32(b, count);
  b.push_back(3);
  b.push_back(7);
  return b;
}

fs::path write(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  const fs::path p = temp_dir() / name;
  std::ofstream(p, std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  return p;
}

fs::path write_gz(const std::string& name, const std::vector<std::uint8_t>& bytes) {
  const fs::path p = temp_dir() / name;
  gzFile f = gzopen(p.c_str(), "wb");
  gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
  gzclose(f);
  return p;
}

}  // namespace

TEST(LoadIdx, FixtureValues) {
  const Dataset ds = load_idx(write("img", image_bytes()), write("lab", label_bytes()));
  ASSERT_EQ(ds.size(), 2u);
  EXPECT_EQ(ds.images.shape(), (Shape{2, 4}));
  for (std::size_t i = 0; i < 4; ++i) {
    EXPECT_EQ(ds.images.at(0, i), 0.0);
    EXPECT_EQ(ds.images.at(1, i), 1.0);
  }
  EXPECT_EQ(ds.labels, (std::vector<std::uint32_t>{3, 7}));
}

TEST(LoadIdx, GzipIsTransparent) {
  const Dataset plain = load_idx(write("img", image_bytes()), write("lab", label_bytes()));
  const Dataset gz = load_idx(write_gz("img.gz", image_bytes()), write_gz("lab.gz", label_bytes()));
  EXPECT_EQ(plain.images, gz.images);
  EXPECT_EQ(plain.labels, gz.labels);
}

TEST(LoadIdx, IsPure) {
  const fs::path i = write("img", image_bytes()), l = write("lab", label_bytes());
  EXPECT_EQ(load_idx(i, l).images, load_idx(i, l).images);
}

TEST(LoadIdx, ErrorsNameTheFile) {
  auto bad = image_bytes();
  bad[3] = 0x01;
  const fs::path bad_path = write("bad_magic_img", bad);
  try {
    load_idx(bad_path, write("lab", label_bytes()));
    FAIL();
  } catch (const IdxMagicError& e) {
    EXPECT_NE(std::string(e.what()).find("bad_magic_img"), std::string::npos);
  }
  EXPECT_THROW(load_idx(write("img", image_bytes()), write("lab3", label_bytes(3))), IdxMismatchError);
  auto shortimg = image_bytes();
  shortimg.resize(shortimg.size() - 1);
  EXPECT_THROW(load_idx(write("short_img", shortimg), write("lab", label_bytes())), IdxTruncatedError);
  auto shortlab = label_bytes();
  shortlab.resize(9);
  EXPECT_THROW(load_idx(write("img", image_bytes()), write("short_lab", shortlab)), IdxTruncatedError);
  EXPECT_THROW(load_idx(temp_dir() / "missing", temp_dir() / "missing2"), IdxError);
  auto badgz = std::vector<std::uint8_t>{0x1f, 0x8b, 0x08, 0x00, 0x01};
  EXPECT_THROW(load_idx(write("badgz", badgz), write("lab", label_bytes())), IdxTruncatedError);
}

TEST(Mnist, OfficialFilesWhenAvailable) {
  const char* dir = std::getenv("SENSPRUNE_DATA_DIR");
  if (!dir || !fs::exists(fs::path(dir) / "t10k-labels-idx1-ubyte")) GTEST_SKIP() << "MNIST not available";
  const Dataset test = load_mnist_split(dir, "t10k");
  EXPECT_EQ(test.size(), 10000u);
  EXPECT_EQ(test.images.shape(), (Shape{10000, 784}));
  const Dataset train = load_mnist_split(dir, "train");
  EXPECT_EQ(train.size(), 60000u);
  const auto [lo, hi] = std::minmax_element(train.images.data().begin(), train.images.data().end());
  EXPECT_EQ(*lo, 0.0);
  EXPECT_EQ(*hi, 1.0);
}

TEST(SyntheticBlobs, Deterministic) {
  const Dataset a = synthetic_blobs(100, 3, 5, 9), b = synthetic_blobs(100, 3, 5, 9), c = synthetic_blobs(100, 3, 5, 10);
  EXPECT_EQ(a.images, b.images);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.images, c.images);
  for (double v : a.images.data()) {
    EXPECT_GE(v, 0.0);
    EXPECT_LE(v, 1.0);
  }
}

TEST(SyntheticBlobs, SingleClass) {
  const Dataset ds = synthetic_blobs(20, 1, 3, 1);
  for (std::uint32_t l : ds.labels) EXPECT_EQ(l, 0u);
  EXPECT_THROW(synthetic_blobs(0, 1, 1, 1), std::invalid_argument);
}

TEST(SyntheticBlobs, SeparableByLinearModel) {
  const Dataset train = synthetic_blobs(600, 4, 8, 1), test = synthetic_blobs(400, 4, 8, 2);
  Network net({8}, {LayerSpec::affine(8, 4), LayerSpec::softmax_output()});
  TrainConfig cfg;
  cfg.regularizer = RegularizerKind::none;
  cfg.lambda = 0.0;
  cfg.batch_size = 20;
  cfg.eta = 0.5;
  for (std::size_t e = 0; e < 30; ++e) train_epoch(net, train, cfg, e);
  EXPECT_LE(evaluate(net, test).error, 0.01);
}

TEST(OneHot, RowsAreOneHot) {
  const Tensor y = one_hot({0, 2, 1, 2}, 3);
  for (std::size_t r = 0; r < 4; ++r) {
    double s = 0.0;
    int nonzero = 0;
    for (std::size_t k = 0; k < 3; ++k) {
      s += y.at(r, k);
      nonzero += y.at(r, k) != 0.0;
    }
    EXPECT_EQ(s, 1.0);
    EXPECT_EQ(nonzero, 1);
  }
  EXPECT_THROW(one_hot({3}, 3), std::out_of_range);
}

TEST(Batches, PartitionForManySizes) {
  const Dataset ds = synthetic_blobs(53, 3, 2, 4);
  for (std::size_t size : {1u, 2u, 7u, 10u, 52u, 53u, 60u}) {
    const auto bs = batches(ds, size, 11, 0);
    std::multiset<std::size_t> seen;
    std::size_t total = 0;
    for (const Batch& b : bs) {
      EXPECT_LE(b.labels.size(), size);
      EXPECT_EQ(b.x.dim(0), b.labels.size());
      total += b.labels.size();
      seen.insert(b.indices.begin(), b.indices.end());
      for (std::size_t i = 0; i < b.indices.size(); ++i) EXPECT_EQ(b.labels[i], ds.labels[b.indices[i]]);
    }
    EXPECT_EQ(total, ds.size());
    std::multiset<std::size_t> all;
    for (std::size_t i = 0; i < ds.size(); ++i) all.insert(i);
    EXPECT_EQ(seen, all) << "batch size " << size;
  }
}

TEST(Batches, WholeSetInOneBatch) {
  const Dataset ds = synthetic_blobs(17, 2, 2, 4);
  const auto bs = batches(ds, 17, 1, 0);
  ASSERT_EQ(bs.size(), 1u);
  EXPECT_EQ(bs[0].labels.size(), 17u);
}

TEST(Batches, EpochsReorderSameMultiset) {
  const Dataset ds = synthetic_blobs(100, 2, 2, 4);
  const BatchSampler e0(ds, 10, 5, 0), e1(ds, 10, 5, 1), again(ds, 10, 5, 0);
  EXPECT_NE(e0.order(), e1.order());
  EXPECT_EQ(e0.order(), again.order());
  auto a = e0.order(), b = e1.order();
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  EXPECT_EQ(a, b);
  EXPECT_THROW(BatchSampler(ds, 0, 1, 0), std::invalid_argument);
}

TEST(Dataset, ReshapeAndSlice) {
  const Dataset ds = synthetic_blobs(10, 2, 4, 1);
  const Dataset r = ds.reshaped({1, 2, 2});
  EXPECT_EQ(r.images.shape(), (Shape{10, 1, 2, 2}));
  const Dataset s = ds.slice(3, 4);
  EXPECT_EQ(s.size(), 4u);
  EXPECT_EQ(s.labels[0], ds.labels[3]);
  EXPECT_THROW(ds.slice(8, 3), DimensionError);
}
