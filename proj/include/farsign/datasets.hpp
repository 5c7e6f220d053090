#pragma once

#include <zlib.h>

#include <array>
#include <cmath>
#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "errors.hpp"
#include "rng.hpp"

namespace farsign {

enum class Split { train, test };

// Row-major feature matrix with integer class labels.
struct Dataset {
    std::size_t n_samples = 0;
    std::size_t n_features = 0;
    std::size_t n_classes = 0;
    std::vector<float> features;
    std::vector<std::uint16_t> labels;
    Split split = Split::train;

    std::span<const float> row(std::size_t i) const { return {features.data() + i * n_features, n_features}; }

    void validate() const {
        if (features.size() != n_samples * n_features) throw DataError("dataset: feature matrix size mismatch");
        if (labels.size() != n_samples) throw DataError("dataset: label count mismatch");
        for (auto l : labels)
            if (l >= n_classes) throw DataError("dataset: label " + std::to_string(l) + " out of range");
    }

    // First `count` rows (or all, if fewer).
    Dataset head(std::size_t count) const {
        Dataset out;
        out.n_samples = std::min(count, n_samples);
        out.n_features = n_features;
        out.n_classes = n_classes;
        out.split = split;
        out.features.assign(features.begin(), features.begin() + static_cast<std::ptrdiff_t>(out.n_samples * n_features));
        out.labels.assign(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(out.n_samples));
        return out;
    }
};

// ---------------------------------------------------------------------------
// IDX (MNIST) files. zlib's gz reader passes plain files through unchanged,
// so gzip-compressed and raw files are both accepted.

namespace detail {

class GzFile {
public:
    explicit GzFile(const std::string& path) : fp_(gzopen(path.c_str(), "rb")) {
        if (!fp_) throw DataError("cannot open '" + path + "'");
    }
    ~GzFile() {
        if (fp_) gzclose(fp_);
    }
    GzFile(const GzFile&) = delete;
    GzFile& operator=(const GzFile&) = delete;

    // Reads exactly n bytes or throws.
    void read(void* dst, std::size_t n, const std::string& what) {
        auto* p = static_cast<unsigned char*>(dst);
        while (n > 0) {
            const unsigned chunk = static_cast<unsigned>(std::min<std::size_t>(n, 1u << 30));
            const int got = gzread(fp_, p, chunk);
            if (got <= 0) throw DataError(what + ": truncated file");
            p += got;
            n -= static_cast<std::size_t>(got);
        }
    }

    std::uint32_t read_be32(const std::string& what) {
        std::array<unsigned char, 4> b{};
        read(b.data(), 4, what);
        return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) | b[3];
    }

private:
    gzFile fp_;
};

inline constexpr std::uint32_t idx_images_magic = 2051;
inline constexpr std::uint32_t idx_labels_magic = 2049;

} // namespace detail

// Pixels are scaled to [0,1]; each image is flattened row by row.
inline Dataset load_mnist_idx(const std::string& image_path, const std::string& label_path,
                              Split split = Split::train) {
    detail::GzFile images(image_path);
    const auto img_magic = images.read_be32(image_path);
    if (img_magic != detail::idx_images_magic)
        throw DataError(image_path + ": bad magic " + std::to_string(img_magic) + " (expected 2051)");
    const auto n_images = images.read_be32(image_path);
    const auto rows = images.read_be32(image_path);
    const auto cols = images.read_be32(image_path);

    detail::GzFile labels(label_path);
    const auto lbl_magic = labels.read_be32(label_path);
    if (lbl_magic != detail::idx_labels_magic)
        throw DataError(label_path + ": bad magic " + std::to_string(lbl_magic) + " (expected 2049)");
    const auto n_labels = labels.read_be32(label_path);
    if (n_labels != n_images)
        throw DataError("image/label count mismatch: " + std::to_string(n_images) + " vs " + std::to_string(n_labels));

    Dataset ds;
    ds.split = split;
    ds.n_samples = n_images;
    ds.n_features = static_cast<std::size_t>(rows) * cols;
    ds.n_classes = 10;
    std::vector<unsigned char> buf(ds.n_samples * ds.n_features);
    images.read(buf.data(), buf.size(), image_path);
    ds.features.resize(buf.size());
    for (std::size_t i = 0; i < buf.size(); ++i) ds.features[i] = static_cast<float>(buf[i]) / 255.0f;

    std::vector<unsigned char> lbuf(ds.n_samples);
    labels.read(lbuf.data(), lbuf.size(), label_path);
    ds.labels.assign(lbuf.begin(), lbuf.end());
    ds.validate();
    return ds;
}

// ---------------------------------------------------------------------------
// Synthetic Gaussian-mixture classification data. Class c has mean
// (separation / 2) * u_c for random unit vectors u_c (antipodal when there are
// two classes) and identity covariance.

struct SyntheticSpec {
    std::size_t samples = 2000;
    std::size_t features = 20;
    std::size_t classes = 2;
    double separation = 2.0;
    std::uint64_t seed = 0;
};

inline std::pair<Dataset, Dataset> make_synthetic_classification(const SyntheticSpec& spec, std::size_t test_samples) {
    if (spec.features == 0 || spec.classes < 2) throw InvalidArgument("synthetic data: need features >= 1 and classes >= 2");
    Rng rng(spec.seed, Stream::data, 0xda7a);
    std::vector<std::vector<double>> means(spec.classes, std::vector<double>(spec.features));
    for (std::size_t c = 0; c < spec.classes; ++c) {
        if (spec.classes == 2 && c == 1) {
            for (std::size_t j = 0; j < spec.features; ++j) means[1][j] = -means[0][j];
            break;
        }
        double nrm = 0.0;
        for (auto& v : means[c]) {
            v = rng.normal();
            nrm += v * v;
        }
        nrm = std::sqrt(nrm);
        for (auto& v : means[c]) v *= 0.5 * spec.separation / nrm;
    }
    auto draw = [&](std::size_t n, Split split) {
        Dataset ds;
        ds.split = split;
        ds.n_samples = n;
        ds.n_features = spec.features;
        ds.n_classes = spec.classes;
        ds.features.resize(n * spec.features);
        ds.labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) {
            const auto c = static_cast<std::uint16_t>(rng.index(spec.classes));
            ds.labels[i] = c;
            for (std::size_t j = 0; j < spec.features; ++j)
                ds.features[i * spec.features + j] = static_cast<float>(means[c][j] + rng.normal());
        }
        return ds;
    };
    Dataset train = draw(spec.samples, Split::train);
    Dataset test = draw(test_samples, Split::test);
    return {std::move(train), std::move(test)};
}

} // namespace farsign
