#include <gtest/gtest.h>
#include <zlib.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "farsign/datasets.hpp"

using namespace farsign;
namespace fs = std::filesystem;

namespace {

std::vector<unsigned char> be32(std::uint32_t v) {
    return {static_cast<unsigned char>(v >> 24), static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 8),
            static_cast<unsigned char>(v)};
}

std::vector<unsigned char> idx_images(std::uint32_t magic, std::uint32_t n, std::uint32_t rows, std::uint32_t cols,
                                      const std::vector<unsigned char>& pixels) {
    std::vector<unsigned char> out;
    for (auto v : {magic, n, rows, cols}) {
        const auto b = be32(v);
        out.insert(out.end(), b.begin(), b.end());
    }
    out.insert(out.end(), pixels.begin(), pixels.end());
    return out;
}

std::vector<unsigned char> idx_labels(std::uint32_t magic, std::uint32_t n, const std::vector<unsigned char>& labels) {
    std::vector<unsigned char> out;
    for (auto v : {magic, n}) {
        const auto b = be32(v);
        out.insert(out.end(), b.begin(), b.end());
    }
    out.insert(out.end(), labels.begin(), labels.end());
    return out;
}

class IdxFiles : public ::testing::Test {
protected:
    void SetUp() override {
        dir_ = fs::path(::testing::TempDir()) / ("farsign_idx_" + std::to_string(::getpid()));
        fs::create_directories(dir_);
    }
    void TearDown() override { fs::remove_all(dir_); }

    std::string write_raw(const std::string& name, const std::vector<unsigned char>& bytes) {
        const auto p = (dir_ / name).string();
        std::ofstream os(p, std::ios::binary);
        os.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        return p;
    }

    std::string write_gz(const std::string& name, const std::vector<unsigned char>& bytes) {
        const auto p = (dir_ / name).string();
        gzFile f = gzopen(p.c_str(), "wb");
        gzwrite(f, bytes.data(), static_cast<unsigned>(bytes.size()));
        gzclose(f);
        return p;
    }

    fs::path dir_;
};

} // namespace

TEST_F(IdxFiles, ParsesRawAndGzipIdentically) {
    // Two 2x3 images.
    const std::vector<unsigned char> px{0, 51, 102, 153, 204, 255, 255, 0, 0, 0, 0, 17};
    const auto img = idx_images(2051, 2, 2, 3, px);
    const auto lbl = idx_labels(2049, 2, {7, 3});
    const auto raw = load_mnist_idx(write_raw("i.idx", img), write_raw("l.idx", lbl));
    const auto gz = load_mnist_idx(write_gz("i.idx.gz", img), write_gz("l.idx.gz", lbl), Split::test);
    EXPECT_EQ(raw.n_samples, 2u);
    EXPECT_EQ(raw.n_features, 6u);
    EXPECT_EQ(raw.n_classes, 10u);
    EXPECT_EQ(raw.labels, (std::vector<std::uint16_t>{7, 3}));
    EXPECT_FLOAT_EQ(raw.features[1], 0.2f);
    EXPECT_FLOAT_EQ(raw.features[5], 1.0f);
    EXPECT_FLOAT_EQ(raw.row(1)[0], 1.0f);
    EXPECT_EQ(raw.features, gz.features);
    EXPECT_EQ(raw.labels, gz.labels);
    EXPECT_EQ(gz.split, Split::test);
}

TEST_F(IdxFiles, RejectsBadMagic) {
    const auto img = idx_images(2049, 1, 1, 1, {9});
    const auto lbl = idx_labels(2049, 1, {1});
    EXPECT_THROW(load_mnist_idx(write_raw("i", img), write_raw("l", lbl)), DataError);
    const auto img2 = idx_images(2051, 1, 1, 1, {9});
    const auto lbl2 = idx_labels(2051, 1, {1});
    EXPECT_THROW(load_mnist_idx(write_raw("i2", img2), write_raw("l2", lbl2)), DataError);
}

TEST_F(IdxFiles, RejectsCountMismatchAndTruncation) {
    const auto img = idx_images(2051, 2, 1, 2, {1, 2, 3, 4});
    EXPECT_THROW(load_mnist_idx(write_raw("i", img), write_raw("l", idx_labels(2049, 3, {1, 2, 3}))), DataError);
    const auto short_img = idx_images(2051, 2, 1, 2, {1, 2, 3});
    EXPECT_THROW(load_mnist_idx(write_raw("i2", short_img), write_raw("l2", idx_labels(2049, 2, {1, 2}))), DataError);
    EXPECT_THROW(load_mnist_idx(write_raw("i3", img), write_raw("l3", idx_labels(2049, 2, {1}))), DataError);
    EXPECT_THROW(load_mnist_idx((dir_ / "missing").string(), write_raw("l4", idx_labels(2049, 2, {1, 2}))), DataError);
    // Label 12 is outside the ten digit classes.
    EXPECT_THROW(load_mnist_idx(write_raw("i5", img), write_raw("l5", idx_labels(2049, 2, {1, 12}))), DataError);
}

TEST(Dataset, HeadKeepsLeadingRows) {
    Dataset d;
    d.n_samples = 3;
    d.n_features = 2;
    d.n_classes = 2;
    d.features = {1, 2, 3, 4, 5, 6};
    d.labels = {0, 1, 0};
    const auto h = d.head(2);
    EXPECT_EQ(h.n_samples, 2u);
    EXPECT_EQ(h.features, (std::vector<float>{1, 2, 3, 4}));
    EXPECT_EQ(d.head(10).n_samples, 3u);
}

TEST(Synthetic, ShapesAndDeterminism) {
    SyntheticSpec sp;
    sp.samples = 500;
    sp.features = 8;
    sp.seed = 4;
    const auto [a, at] = make_synthetic_classification(sp, 100);
    const auto [b, bt] = make_synthetic_classification(sp, 100);
    EXPECT_EQ(a.n_samples, 500u);
    EXPECT_EQ(at.n_samples, 100u);
    EXPECT_EQ(a.features, b.features);
    EXPECT_EQ(at.labels, bt.labels);
    EXPECT_NO_THROW(a.validate());
    sp.seed = 5;
    EXPECT_NE(make_synthetic_classification(sp, 10).first.features, a.features);
}

TEST(Synthetic, TwoClassMeansAreAntipodalAtSeparation) {
    SyntheticSpec sp;
    sp.samples = 40000;
    sp.features = 4;
    sp.separation = 3.0;
    const auto [d, t] = make_synthetic_classification(sp, 0);
    std::vector<double> m0(4, 0.0), m1(4, 0.0);
    double n0 = 0, n1 = 0;
    for (std::size_t i = 0; i < d.n_samples; ++i) {
        auto& m = d.labels[i] == 0 ? m0 : m1;
        (d.labels[i] == 0 ? n0 : n1) += 1;
        for (std::size_t j = 0; j < 4; ++j) m[j] += d.row(i)[j];
    }
    double dist = 0.0;
    for (std::size_t j = 0; j < 4; ++j) {
        m0[j] /= n0;
        m1[j] /= n1;
        EXPECT_NEAR(m0[j], -m1[j], 0.05);
        dist += (m0[j] - m1[j]) * (m0[j] - m1[j]);
    }
    EXPECT_NEAR(std::sqrt(dist), 3.0, 0.05);
    // Balanced classes: 3-sigma binomial band.
    EXPECT_NEAR(n0 / sp.samples, 0.5, 3.0 * std::sqrt(0.25 / sp.samples));
}

TEST(Synthetic, RejectsBadSpec) {
    SyntheticSpec sp;
    sp.classes = 1;
    EXPECT_THROW(make_synthetic_classification(sp, 10), InvalidArgument);
}
