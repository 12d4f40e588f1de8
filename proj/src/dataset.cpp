#include "advlab/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numbers>

#include "advlab/errors.hpp"
#include "advlab/rng.hpp"

namespace advlab {

namespace {

constexpr uint32_t kImagesMagic = 0x00000803;
constexpr uint32_t kLabelsMagic = 0x00000801;

struct Point {
    double a = 0.0, b = 0.0;
    int64_t label = 0;
};

Tensor features_of(const std::vector<Point>& pts) {
    Tensor t({static_cast<int64_t>(pts.size()), 2});
    for (size_t i = 0; i < pts.size(); ++i) {
        t[static_cast<int64_t>(2 * i)] = pts[i].a;
        t[static_cast<int64_t>(2 * i + 1)] = pts[i].b;
    }
    return t;
}

Tensor labels_of(const std::vector<Point>& pts) {
    Tensor t({static_cast<int64_t>(pts.size())});
    for (size_t i = 0; i < pts.size(); ++i)
        t[static_cast<int64_t>(i)] = static_cast<double>(pts[i].label);
    return t;
}

std::vector<uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("idx: cannot open '" + path + "'");
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                               std::istreambuf_iterator<char>());
    if (in.bad()) throw IoError("idx: read failure on '" + path + "'");
    return bytes;
}

uint32_t read_be32(const std::vector<uint8_t>& b, size_t off) {
    return (uint32_t(b[off]) << 24) | (uint32_t(b[off + 1]) << 16) |
           (uint32_t(b[off + 2]) << 8) | uint32_t(b[off + 3]);
}

void write_be32(std::ofstream& out, uint32_t v) {
    const uint8_t b[4] = {uint8_t(v >> 24), uint8_t(v >> 16), uint8_t(v >> 8),
                          uint8_t(v)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

}  // namespace

void Dataset::validate() const {
    if (train_x.shape().size() != 2 || test_x.shape().size() != 2)
        throw ShapeError("dataset: features must be [rows, dim]");
    if (train_x.shape()[1] != test_x.shape()[1])
        throw ShapeError("dataset: train dim " +
                         std::to_string(train_x.shape()[1]) + " != test dim " +
                         std::to_string(test_x.shape()[1]));
    if (train_y.size() != train_x.shape()[0] ||
        test_y.size() != test_x.shape()[0])
        throw ShapeError("dataset: label count does not match feature rows");
    if (classes < 2) throw ContractError("dataset: need at least 2 classes");
    auto check_labels = [&](const Tensor& y, const char* split) {
        for (int64_t i = 0; i < y.size(); ++i) {
            const double l = y[i];
            if (l != std::floor(l) || l < 0.0 ||
                l >= static_cast<double>(classes))
                throw ContractError(std::string("dataset: ") + split +
                                    " label out of range at row " +
                                    std::to_string(i));
        }
    };
    check_labels(train_y, "train");
    check_labels(test_y, "test");
    if (input_box && !(input_box->first < input_box->second))
        throw ContractError("dataset: input box must have lo < hi");
}

Dataset gen_synthetic(const std::string& kind, int64_t n, double noise,
                      uint64_t seed) {
    const bool gaussians = kind == "gaussians";
    if (!gaussians && kind != "moons")
        throw ConfigError("synthetic: unknown kind '" + kind +
                          "' (want gaussians|moons)");
    if (!std::isfinite(noise) || noise < 0.0)
        throw ConfigError("synthetic: noise must be finite and >= 0, got " +
                          std::to_string(noise));
    constexpr int64_t kClasses = 2;
    if (n < 2 * kClasses)
        throw ContractError("synthetic: need n >= " +
                            std::to_string(2 * kClasses) + ", got " +
                            std::to_string(n));

    Rng rng(Rng::derive(seed, {stream::kData}));
    std::vector<Point> train, test;
    for (int64_t c = 0; c < kClasses; ++c) {
        const int64_t nc = c == 0 ? (n + 1) / 2 : n / 2;
        std::vector<Point> pts(static_cast<size_t>(nc));
        for (int64_t j = 0; j < nc; ++j) {
            Point& p = pts[static_cast<size_t>(j)];
            p.label = c;
            if (gaussians) {
                // Means at x = -/+1.5; the structured offset fans each
                // class along the separating axis's orthogonal.
                p.a = c == 0 ? -1.5 : 1.5;
                p.b = static_cast<double>(j % 5 - 2) * 0.1;
            } else {
                const double t = std::numbers::pi *
                                 (static_cast<double>(j) + 0.5) /
                                 static_cast<double>(nc);
                p.a = c == 0 ? std::cos(t) : 1.0 - std::cos(t);
                p.b = c == 0 ? std::sin(t) : 0.5 - std::sin(t);
            }
            p.a += noise * rng.normal();
            p.b += noise * rng.normal();
        }
        // Disjoint halves per class keep both splits balanced within one.
        const std::vector<int64_t> perm = rng.permutation(nc);
        const int64_t nc_train = (nc + 1) / 2;
        for (int64_t j = 0; j < nc; ++j)
            (j < nc_train ? train : test)
                .push_back(pts[static_cast<size_t>(perm[static_cast<size_t>(j)])]);
    }
    auto mix = [&rng](std::vector<Point>& pts) {
        const std::vector<int64_t> perm =
            rng.permutation(static_cast<int64_t>(pts.size()));
        std::vector<Point> out(pts.size());
        for (size_t i = 0; i < pts.size(); ++i)
            out[i] = pts[static_cast<size_t>(perm[i])];
        pts = std::move(out);
    };
    mix(train);
    mix(test);

    Dataset d;
    d.name = kind;
    d.classes = kClasses;
    d.train_x = features_of(train);
    d.train_y = labels_of(train);
    d.test_x = features_of(test);
    d.test_y = labels_of(test);
    d.validate();
    return d;
}

Dataset load_idx_subset(const std::string& prefix, int64_t count,
                        uint64_t seed) {
    if (count == 0)
        throw ContractError("idx: count = 0 would make an empty dataset");
    if (count < 0)
        throw ContractError("idx: count must be positive, got " +
                            std::to_string(count));

    const std::string ipath = prefix + "-images-idx3-ubyte";
    const std::string lpath = prefix + "-labels-idx1-ubyte";
    const std::vector<uint8_t> ibytes = read_file(ipath);
    const std::vector<uint8_t> lbytes = read_file(lpath);

    if (ibytes.size() < 16)
        throw IoError("idx: '" + ipath + "' truncated before the header");
    if (read_be32(ibytes, 0) != kImagesMagic)
        throw IoError("idx: '" + ipath + "' has bad magic (want 00000803)");
    const int64_t records = read_be32(ibytes, 4);
    const int64_t rows = read_be32(ibytes, 8);
    const int64_t cols = read_be32(ibytes, 12);
    if (records < 1 || rows < 1 || cols < 1)
        throw IoError("idx: '" + ipath + "' declares an empty dimension");
    if (static_cast<int64_t>(ibytes.size()) != 16 + records * rows * cols)
        throw IoError("idx: '" + ipath + "' size does not match its header " +
                      "(truncated or trailing bytes)");

    if (lbytes.size() < 8)
        throw IoError("idx: '" + lpath + "' truncated before the header");
    if (read_be32(lbytes, 0) != kLabelsMagic)
        throw IoError("idx: '" + lpath + "' has bad magic (want 00000801)");
    const int64_t lrecords = read_be32(lbytes, 4);
    if (static_cast<int64_t>(lbytes.size()) != 8 + lrecords)
        throw IoError("idx: '" + lpath + "' size does not match its header " +
                      "(truncated or trailing bytes)");
    if (lrecords != records)
        throw IoError("idx: '" + ipath + "' has " + std::to_string(records) +
                      " records but '" + lpath + "' has " +
                      std::to_string(lrecords));
    if (count >= records)
        throw IoError("idx: subset of " + std::to_string(count) +
                      " training records leaves no test split in '" + ipath +
                      "' (" + std::to_string(records) + " records)");

    int64_t max_label = 0;
    for (int64_t i = 0; i < records; ++i)
        max_label = std::max(max_label, int64_t(lbytes[size_t(8 + i)]));

    const int64_t dim = rows * cols;
    const int64_t test_count = std::min(count, records - count);
    const std::vector<int64_t> perm =
        Rng(Rng::derive(seed, {stream::kData})).permutation(records);
    auto take = [&](int64_t first, int64_t m, Tensor& x, Tensor& y) {
        x = Tensor({m, dim});
        y = Tensor({m});
        for (int64_t r = 0; r < m; ++r) {
            const int64_t src = perm[static_cast<size_t>(first + r)];
            const uint8_t* px = ibytes.data() + 16 + src * dim;
            for (int64_t c = 0; c < dim; ++c)
                x[r * dim + c] = static_cast<double>(px[c]) / 255.0;
            y[r] = static_cast<double>(lbytes[static_cast<size_t>(8 + src)]);
        }
    };

    Dataset d;
    d.name = prefix;
    d.classes = max_label + 1;
    d.input_box = {0.0, 1.0};
    take(0, count, d.train_x, d.train_y);
    take(count, test_count, d.test_x, d.test_y);
    d.validate();
    return d;
}

void write_idx(const std::string& prefix, const std::vector<uint8_t>& pixels,
               int64_t count, int64_t rows, int64_t cols,
               const std::vector<uint8_t>& labels) {
    if (count < 1 || rows < 1 || cols < 1)
        throw ContractError("idx: dimensions must be positive");
    if (static_cast<int64_t>(pixels.size()) != count * rows * cols)
        throw ContractError("idx: pixel buffer does not match count*rows*cols");
    if (static_cast<int64_t>(labels.size()) != count)
        throw ContractError("idx: label buffer does not match count");

    const std::string ipath = prefix + "-images-idx3-ubyte";
    std::ofstream iout(ipath, std::ios::binary | std::ios::trunc);
    if (!iout) throw IoError("idx: cannot open '" + ipath + "' for writing");
    write_be32(iout, kImagesMagic);
    write_be32(iout, static_cast<uint32_t>(count));
    write_be32(iout, static_cast<uint32_t>(rows));
    write_be32(iout, static_cast<uint32_t>(cols));
    iout.write(reinterpret_cast<const char*>(pixels.data()),
               static_cast<std::streamsize>(pixels.size()));
    if (!iout) throw IoError("idx: write failure on '" + ipath + "'");
    iout.close();

    const std::string lpath = prefix + "-labels-idx1-ubyte";
    std::ofstream lout(lpath, std::ios::binary | std::ios::trunc);
    if (!lout) throw IoError("idx: cannot open '" + lpath + "' for writing");
    write_be32(lout, kLabelsMagic);
    write_be32(lout, static_cast<uint32_t>(count));
    lout.write(reinterpret_cast<const char*>(labels.data()),
               static_cast<std::streamsize>(labels.size()));
    if (!lout) throw IoError("idx: write failure on '" + lpath + "'");
}

}  // namespace advlab
