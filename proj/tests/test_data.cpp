#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "qdistill/data.hpp"
#include "qdistill/rng.hpp"
#include "qdistill/synth.hpp"

using namespace qdistill;
using namespace qdistill::data;

namespace {

struct TempDir {
    std::filesystem::path path;
    explicit TempDir(const std::string& name) : path(name) {
        std::filesystem::create_directories(path);
    }
    ~TempDir() { std::filesystem::remove_all(path); }
    std::string file(const std::string& name) const { return (path / name).string(); }
};

} // namespace

TEST_CASE("idx round trip on a synthetic fixture") {
    TempDir dir("data_test_idx");
    std::vector<std::vector<std::uint8_t>> images(2, std::vector<std::uint8_t>(28 * 28, 0));
    images[0][0] = 255;
    images[1][5] = 128;
    const std::vector<std::uint8_t> labels{3, 7};
    write_idx_pair(dir.file("im"), dir.file("lb"), images, 28, 28, labels);

    const auto ds = load_idx(dir.file("im"), dir.file("lb"));
    CHECK(ds.images.shape == std::vector<int>{2, 1, 28, 28});
    CHECK(ds.labels == std::vector<int>{3, 7});
    CHECK(ds.sample(0)[0] == doctest::Approx(1.0));   // 255 -> 1.0
    CHECK(ds.sample(0)[1] == doctest::Approx(0.0));   // 0 -> 0.0
    CHECK(ds.sample(1)[5] == doctest::Approx(128.0 / 255.0));
    CHECK(ds.source_indices == std::vector<int>{0, 1});

    SUBCASE("loaders are bit-deterministic") {
        const auto again = load_idx(dir.file("im"), dir.file("lb"));
        CHECK(again.images.data == ds.images.data);
    }
}

TEST_CASE("idx format errors") {
    TempDir dir("data_test_idx_bad");
    {
        std::ofstream bad(dir.file("bad"), std::ios::binary);
        const char junk[] = "\x00\x00\x08\x05garbage";
        bad.write(junk, sizeof(junk));
    }
    {
        std::ofstream lbl(dir.file("lb"), std::ios::binary);
        const unsigned char hdr[] = {0, 0, 8, 1, 0, 0, 0, 1, 9};
        lbl.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    }
    CHECK_THROWS_AS(load_idx(dir.file("bad"), dir.file("lb")), FormatError);
    CHECK_THROWS_AS(load_idx(dir.file("missing"), dir.file("lb")), IoError);

    // mismatched image/label counts
    std::vector<std::vector<std::uint8_t>> images(2, std::vector<std::uint8_t>(4, 0));
    write_idx_pair(dir.file("im2"), dir.file("lb2"), images, 2, 2, {1, 2});
    {
        std::ofstream lbl(dir.file("lb3"), std::ios::binary);
        const unsigned char hdr[] = {0, 0, 8, 1, 0, 0, 0, 3, 1, 2, 3};
        lbl.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    }
    CHECK_THROWS_AS(load_idx(dir.file("im2"), dir.file("lb3")), FormatError);

    // truncated image payload
    {
        std::ofstream img(dir.file("im4"), std::ios::binary);
        const unsigned char hdr[] = {0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2,
                                     1, 2, 3, 4, 5};
        img.write(reinterpret_cast<const char*>(hdr), sizeof(hdr));
    }
    CHECK_THROWS_AS(load_idx(dir.file("im4"), dir.file("lb2")), FormatError);
}

TEST_CASE("cifar10 loader") {
    TempDir dir("data_test_cifar");
    {
        std::ofstream out(dir.file("batch.bin"), std::ios::binary);
        std::vector<unsigned char> rec(3073, 0);
        rec[0] = 9;
        rec[1] = 255;
        out.write(reinterpret_cast<const char*>(rec.data()), 3073);
        rec[0] = 0;
        rec[1] = 0;
        rec[3072] = 51;
        out.write(reinterpret_cast<const char*>(rec.data()), 3073);
    }
    const auto ds = load_cifar10({dir.file("batch.bin")});
    CHECK(ds.images.shape == std::vector<int>{2, 3, 32, 32});
    CHECK(ds.labels[0] == 9);
    CHECK(ds.sample(0)[0] == doctest::Approx(1.0));
    CHECK(ds.sample(1)[3071] == doctest::Approx(0.2));

    {
        std::ofstream out(dir.file("trunc.bin"), std::ios::binary);
        std::vector<unsigned char> rec(3072, 0); // one byte short
        out.write(reinterpret_cast<const char*>(rec.data()), 3072);
    }
    CHECK_THROWS_AS(load_cifar10({dir.file("trunc.bin")}), FormatError);
}

TEST_CASE("normalizer moments and degenerate features") {
    // three samples of a 2-feature dataset: feature 0 = {1,2,3}, feature 1 constant
    Dataset ds;
    ds.images = Tensor({3, 1, 1, 2}, {1.0, 5.0, 2.0, 5.0, 3.0, 5.0});
    ds.labels = {0, 1, 0};
    ds.source_indices = {0, 1, 2};

    const auto norm = fit_normalizer(ds);
    CHECK(norm.mean[0] == doctest::Approx(2.0));
    CHECK(norm.std[0] == doctest::Approx(std::sqrt(2.0 / 3.0)).epsilon(1e-12));
    CHECK(norm.zero_sigma[1] == 1);
    CHECK(norm.num_zero_sigma() == 1);

    const auto normed = apply_normalizer(ds, norm);
    CHECK(normed.sample(0)[1] == 0.0); // sigma=0 feature maps to 0
    CHECK(normed.normalized_with.has_value());

    // per-feature mean of the fit split is ~0
    double mean0 = 0.0;
    for (std::size_t i = 0; i < 3; ++i) mean0 += normed.sample(i)[0];
    CHECK(std::fabs(mean0 / 3.0) < 1e-10);

    SUBCASE("x equal to the mean maps to zero") {
        Dataset one;
        one.images = Tensor({1, 1, 1, 2}, {2.0, 5.0});
        one.labels = {0};
        one.source_indices = {0};
        const auto z = apply_normalizer(one, norm);
        CHECK(z.sample(0)[0] == 0.0);
    }
    SUBCASE("identity when mean 0 and std 1") {
        Normalizer id;
        id.mean = {0.0, 0.0};
        id.std = {1.0, 1.0};
        id.zero_sigma = {0, 0};
        id.fitted_on = "train";
        const auto same = apply_normalizer(ds, id);
        CHECK(same.images.data == ds.images.data);
    }
    CHECK_THROWS_AS(fit_normalizer(Dataset{}), ConfigError);
}

TEST_CASE("balanced seeded subsets") {
    Dataset ds;
    const int per_label = 5, classes = 3;
    ds.images = Tensor({per_label * classes, 1, 1, 1});
    for (int c = 0; c < classes; ++c)
        for (int i = 0; i < per_label; ++i) ds.labels.push_back(c);
    for (int i = 0; i < per_label * classes; ++i) ds.source_indices.push_back(i);
    for (std::size_t i = 0; i < ds.images.data.size(); ++i)
        ds.images.data[i] = static_cast<double>(i);

    const auto sub = subset(ds, 3, 42);
    CHECK(sub.size() == 9);
    std::vector<int> counts(classes, 0);
    for (int l : sub.labels) counts[static_cast<std::size_t>(l)]++;
    for (int c : counts) CHECK(c == 3);

    const auto sub2 = subset(ds, 3, 42);
    CHECK(sub.source_indices == sub2.source_indices);
    const auto sub3 = subset(ds, 3, 43);
    CHECK(sub.source_indices != sub3.source_indices);

    CHECK_THROWS_AS(subset(ds, 6, 1), ConfigError);
}

TEST_CASE("stratified split covers classes disjointly") {
    Dataset ds;
    const int per_label = 10, classes = 4;
    ds.images = Tensor({per_label * classes, 1, 1, 1});
    for (int c = 0; c < classes; ++c)
        for (int i = 0; i < per_label; ++i) ds.labels.push_back(c);
    for (int i = 0; i < per_label * classes; ++i) ds.source_indices.push_back(i);

    const auto split = stratified_split(ds, 0.1, 7);
    CHECK(split.train.size() + split.val.size() == ds.size());
    std::vector<int> val_counts(classes, 0);
    for (int l : split.val.labels) val_counts[static_cast<std::size_t>(l)]++;
    for (int c : val_counts) CHECK(c == 1); // 10% of 10 per class

    std::vector<char> seen(ds.size(), 0);
    for (int s : split.train.source_indices) seen[static_cast<std::size_t>(s)]++;
    for (int s : split.val.source_indices) seen[static_cast<std::size_t>(s)]++;
    for (char c : seen) CHECK(c == 1);
}

TEST_CASE("teacher logits file round trip and coverage") {
    TempDir dir("data_test_logits");
    TeacherLogitsTable table;
    table.num_classes = 3;
    table.teacher_name = "lenet";
    Rng rng(2);
    for (int i = 0; i < 6; ++i) {
        std::vector<double> row(3);
        for (auto& v : row) v = rng.normal() * 3.0;
        table.rows[i] = row;
    }
    const auto path = dir.file("logits.txt");
    save_teacher_logits(path, table);

    Dataset ds;
    ds.images = Tensor({6, 1, 1, 1});
    ds.labels = {0, 1, 2, 0, 1, 2};
    ds.source_indices = {0, 1, 2, 3, 4, 5};

    const auto loaded = load_teacher_logits(path, ds);
    CHECK(loaded.num_classes == 3);
    CHECK(loaded.teacher_name == "lenet");
    CHECK(loaded.rows.size() == ds.size()); // one row per train sample
    for (int i = 0; i < 6; ++i) {
        const auto row = loaded.lookup(i);
        for (std::size_t c = 0; c < 3; ++c)
            CHECK(row[c] == table.rows.at(i)[c]); // bit-exact round trip
    }

    SUBCASE("missing keys are reported") {
        Dataset bigger = ds;
        bigger.images = Tensor({7, 1, 1, 1});
        bigger.labels.push_back(1);
        bigger.source_indices.push_back(11);
        CHECK_THROWS_AS(load_teacher_logits(path, bigger), CoverageError);
        try {
            load_teacher_logits(path, bigger);
        } catch (const CoverageError& e) {
            CHECK(std::string(e.what()).find("11") != std::string::npos);
        }
    }
    SUBCASE("class-count mismatch is a format error") {
        Dataset wide = ds;
        wide.labels[0] = 9; // now 10 classes
        CHECK_THROWS_AS(load_teacher_logits(path, wide), FormatError);
    }
}

TEST_CASE("synthetic digit fixture loads through the idx path") {
    TempDir dir("data_test_synth");
    const auto paths = synth::write_digit_idx(dir.file(""), "t", 3, 99);
    const auto ds = load_idx(paths.images, paths.labels);
    CHECK(ds.size() == 30);
    CHECK(ds.images.shape == std::vector<int>{30, 1, 28, 28});
    std::vector<int> counts(10, 0);
    for (int l : ds.labels) counts[static_cast<std::size_t>(l)]++;
    for (int c : counts) CHECK(c == 3);
    // images have real content
    double total = 0.0;
    for (double v : ds.images.data) total += v;
    CHECK(total > 10.0);

    // deterministic given the seed
    const auto again = synth::render_digits(3, 99);
    const auto ds2 = load_idx(paths.images, paths.labels);
    CHECK(ds2.images.data == ds.images.data);
    CHECK(again.images[0] == synth::render_digits(3, 99).images[0]);
}
