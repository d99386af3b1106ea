#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <map>
#include <numbers>
#include <random>

#include "doctest.h"
#include "prognet/data/augment.hpp"
#include "prognet/data/checkpoint.hpp"
#include "prognet/data/cifar10.hpp"
#include "prognet/data/kv_config.hpp"
#include "prognet/data/synthetic.hpp"

using namespace prognet;
using namespace prognet::data;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir(const std::string& name) {
    auto dir = fs::temp_directory_path() / ("prognet_test_" + name + "_" + std::to_string(::getpid()));
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::vector<std::uint8_t> random_pixels(std::size_t records, std::mt19937_64& rng) {
    std::vector<std::uint8_t> px(records * cifar10::kImageBytes);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& p : px) p = static_cast<std::uint8_t>(d(rng));
    return px;
}

}  // namespace

TEST_CASE("key-value config parsing") {
    auto kv = KeyValues::parse("# comment\nlr = 0.5\nlist = 1, 2,3\nname = p4\n\nlr = 0.25\n");
    CHECK(kv.get_double("lr") == 0.25);
    CHECK(kv.get_ints("list") == std::vector<long>{1, 2, 3});
    CHECK(kv.get_string("name") == "p4");
    CHECK(kv.get_int("missing", 7) == 7);
    CHECK_THROWS_AS((void)kv.get_string("missing"), ConfigError);
    CHECK_THROWS_AS((void)kv.get_int("name"), ConfigError);
    CHECK_THROWS_AS(KeyValues::parse("no equals sign"), ConfigError);
    CHECK(KeyValues::parse(kv.str()).entries() == kv.entries());
}

TEST_CASE("cifar10 batch write-read round trip is bit exact") {
    auto dir = scratch_dir("cifar_rt");
    std::mt19937_64 rng(3);
    auto px = random_pixels(25, rng);
    std::vector<int> labels(25);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>(i % 10);
    cifar10::write_batch(dir / "b.bin", px, labels);
    CHECK(fs::file_size(dir / "b.bin") == 25 * 3073);
    auto ds = cifar10::read_batch(dir / "b.bin", 25);
    CHECK(ds.bytes == px);
    CHECK(ds.labels == labels);
    CHECK(ds.image_shape == nn::Shape{3, 32, 32});
    // First pixel of the green plane of record 1.
    CHECK(ds.image(1)[1024] == doctest::Approx(px[3072 + 1024] / 255.0));
    fs::remove_all(dir);
}

TEST_CASE("cifar10 validation errors") {
    auto dir = scratch_dir("cifar_err");
    std::mt19937_64 rng(4);
    auto px = random_pixels(3, rng);
    std::vector<int> labels{1, 2, 3};
    cifar10::write_batch(dir / "short.bin", px, labels);
    try {
        (void)cifar10::read_batch(dir / "short.bin");
        FAIL("expected size error");
    } catch (const DataError& e) {
        const std::string msg = e.what();
        CHECK(msg.find("short.bin") != std::string::npos);
        CHECK(msg.find("30730000") != std::string::npos);
    }
    {
        std::ofstream f(dir / "badlabel.bin", std::ios::binary);
        std::vector<char> rec(3073, 0);
        rec[0] = 10;
        f.write(rec.data(), rec.size());
    }
    CHECK_THROWS_AS((void)cifar10::read_batch(dir / "badlabel.bin", 1), DataError);
    CHECK_THROWS_AS((void)cifar10::read_batch(dir / "nope.bin"), DataError);
    CHECK_THROWS_AS((void)cifar10::load(dir / "missing_dir"), DataError);
    CHECK_THROWS_AS((void)cifar10::load(dir), DataError);
    fs::remove_all(dir);
}

TEST_CASE("cifar10 full directory yields 50000/10000 images") {
    auto dir = scratch_dir("cifar_full");
    std::vector<std::uint8_t> px(cifar10::kRecordsPerFile * cifar10::kImageBytes);
    std::vector<int> labels(cifar10::kRecordsPerFile);
    for (std::size_t i = 0; i < labels.size(); ++i) labels[i] = static_cast<int>((i * 7) % 10);
    for (int b = 1; b <= 5; ++b) {
        std::fill(px.begin(), px.end(), static_cast<std::uint8_t>(b));
        cifar10::write_batch(dir / ("data_batch_" + std::to_string(b) + ".bin"), px, labels);
    }
    cifar10::write_batch(dir / "test_batch.bin", px, labels);
    auto [train, val] = cifar10::load(dir);
    CHECK(train.size() == 50000);
    CHECK(val.size() == 10000);
    CHECK(train.split == Split::train);
    CHECK(val.split == Split::val);
    CHECK(train.bytes[cifar10::kImageBytes * 10000] == 2);  // first image of batch 2
    CHECK(train.labels[10001] == 7);
    fs::remove_all(dir);
}

TEST_CASE("augmentation crop and flip") {
    nn::Shape shape{3, 32, 32};
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<float> u(0, 1);
    std::vector<float> img(3 * 32 * 32);
    for (auto& v : img) v = u(rng);

    SUBCASE("centre crop is the identity") {
        auto out = apply_crop_flip(img, shape, {4, 4, false});
        CHECK(out == img);
    }
    SUBCASE("flip is an involution for a fixed crop") {
        for (int trial = 0; trial < 5; ++trial) {
            auto cf = sample_crop_flip(rng);
            cf.flip = false;
            auto once = apply_crop_flip(img, shape, cf);
            cf.flip = true;
            auto flipped = apply_crop_flip(img, shape, cf);
            CHECK(hflip(flipped, shape) == once);
        }
    }
    SUBCASE("flip preserves the pixel histogram") {
        auto a = img;
        auto b = hflip(img, shape);
        std::sort(a.begin(), a.end());
        std::sort(b.begin(), b.end());
        CHECK(a == b);
    }
    SUBCASE("shifted crop moves content and zero-fills the border") {
        auto out = apply_crop_flip(img, shape, {0, 0, false});
        CHECK(out[0] == 0.0f);
        CHECK(out[(4 * 32) + 4] == img[0]);
    }
    SUBCASE("upsample crop keeps values from the source image") {
        auto out = apply_crop_flip(img, shape, {0, 0, false}, CropMode::upsample_crop);
        CHECK(out[0] == img[0]);
    }
    SUBCASE("seeded augmentation is reproducible") {
        std::mt19937_64 a(5), b(5);
        CHECK(augment_train(img, shape, a) == augment_train(img, shape, b));
    }
    SUBCASE("wrong size rejected") {
        std::vector<float> small(3 * 16 * 16);
        CHECK_THROWS_AS(augment_train(small, nn::Shape{3, 16, 16}, rng), DataError);
    }
}

namespace {

// Nearest-centre linear classifier given the class geometry of one tier.
double linear_accuracy(const Dataset& ds, int tier, const SyntheticSpec& spec) {
    // Recover class centres empirically from the data (mean per class), then classify by dot product.
    const std::size_t dim = ds.image_size();
    std::vector<std::vector<double>> centre(spec.num_classes, std::vector<double>(dim, 0.0));
    std::vector<int> counts(spec.num_classes, 0);
    for (std::size_t k = 0; k < ds.size(); ++k) {
        if (ds.tiers[k] != tier) continue;
        auto img = ds.image(k);
        for (std::size_t i = 0; i < dim; ++i) centre[ds.labels[k]][i] += img[i];
        ++counts[ds.labels[k]];
    }
    for (std::size_t c = 0; c < spec.num_classes; ++c)
        for (auto& v : centre[c]) v /= counts[c];
    int correct = 0, total = 0;
    for (std::size_t k = 0; k < ds.size(); ++k) {
        if (ds.tiers[k] != tier) continue;
        auto img = ds.image(k);
        int best = 0;
        double best_score = -1e300;
        for (std::size_t c = 0; c < spec.num_classes; ++c) {
            double s = 0;
            for (std::size_t i = 0; i < dim; ++i) s += img[i] * centre[c][i];
            if (s > best_score) {
                best_score = s;
                best = static_cast<int>(c);
            }
        }
        correct += best == ds.labels[k];
        ++total;
    }
    return static_cast<double>(correct) / total;
}

}  // namespace

TEST_CASE("synthetic generator") {
    SyntheticSpec spec;
    spec.samples_per_tier = 300;

    SUBCASE("deterministic given seed and split") {
        auto a = make_synthetic(spec, Split::train);
        auto b = make_synthetic(spec, Split::train);
        CHECK(a.reals == b.reals);
        CHECK(a.labels == b.labels);
        auto v = make_synthetic(spec, Split::val);
        CHECK(v.reals != a.reals);
        CHECK(a.size() == 900);
        CHECK(std::count(a.tiers.begin(), a.tiers.end(), 2) == 300);
    }
    SUBCASE("separable limit") {
        spec.separations = {1000.0};
        auto ds = make_synthetic(spec);
        CHECK(linear_accuracy(ds, 0, spec) == 1.0);
    }
    SUBCASE("chance limit") {
        spec.separations = {1e-9};
        spec.samples_per_tier = 6000;
        auto train = make_synthetic(spec, Split::train);
        auto acc = linear_accuracy(train, 0, spec);
        CHECK(acc == doctest::Approx(1.0 / 3).epsilon(0.1));
    }
    SUBCASE("degenerate specs rejected") {
        spec.separations = {1.0, 2.0};
        CHECK_THROWS_AS(make_synthetic(spec), DataError);
        spec.separations = {0.0};
        CHECK_THROWS_AS(make_synthetic(spec), DataError);
        spec.separations = {1.0};
        spec.num_classes = 1;
        CHECK_THROWS_AS(make_synthetic(spec), DataError);
    }
    SUBCASE("key-value round trip") {
        auto back = SyntheticSpec::from_kv(spec.to_kv());
        CHECK(back.separations == spec.separations);
        CHECK(back.image_shape == spec.image_shape);
        CHECK(back.seed == spec.seed);
    }
}

TEST_CASE("checkpoint persistence") {
    auto dir = scratch_dir("ckpt");
    nn::Parameter<float> a("layer.w", {2, 3}), b("layer.b", {3});
    std::mt19937_64 rng(1);
    nn::uniform_fill(a.tensor, 1.0, rng);
    nn::uniform_fill(b.tensor, 1.0, rng);
    std::vector<nn::Parameter<float>*> params{&a, &b};
    CheckpointMeta meta{"prognet", digest_hex("x = 1\n"), "x = 1\n", 3, 0.75};
    save_checkpoint(capture(params, meta), dir / "a.ckpt");

    SUBCASE("save-load-save is byte identical") {
        auto loaded = load_checkpoint(dir / "a.ckpt");
        save_checkpoint(loaded, dir / "b.ckpt");
        std::ifstream fa(dir / "a.ckpt", std::ios::binary), fb(dir / "b.ckpt", std::ios::binary);
        std::string sa((std::istreambuf_iterator<char>(fa)), {}), sb((std::istreambuf_iterator<char>(fb)), {});
        CHECK(sa == sb);
        CHECK(loaded.meta.epoch == 3);
        CHECK(loaded.meta.metric == 0.75);
        CHECK(loaded.meta.config_text == "x = 1\n");
    }
    SUBCASE("restore reproduces every bit") {
        nn::Parameter<float> a2("layer.w", {2, 3}), b2("layer.b", {3});
        std::vector<nn::Parameter<float>*> p2{&a2, &b2};
        restore(load_checkpoint(dir / "a.ckpt"), p2);
        CHECK(std::equal(a.tensor.data().begin(), a.tensor.data().end(), a2.tensor.data().begin()));
        CHECK(std::equal(b.tensor.data().begin(), b.tensor.data().end(), b2.tensor.data().begin()));
    }
    SUBCASE("corrupted byte is rejected") {
        std::fstream f(dir / "a.ckpt", std::ios::binary | std::ios::in | std::ios::out);
        f.seekp(40);
        char c = 0;
        f.read(&c, 1);
        f.seekp(40);
        c = static_cast<char>(c ^ 0x5A);
        f.write(&c, 1);
        f.close();
        CHECK_THROWS_AS((void)load_checkpoint(dir / "a.ckpt"), CheckpointError);
    }
    SUBCASE("unknown or missing names are rejected") {
        nn::Parameter<float> other("other.w", {2, 3});
        std::vector<nn::Parameter<float>*> wrong{&other, &b};
        CHECK_THROWS_AS(restore(load_checkpoint(dir / "a.ckpt"), wrong), CheckpointError);
        std::vector<nn::Parameter<float>*> partial{&a};
        CHECK_THROWS_AS(restore(load_checkpoint(dir / "a.ckpt"), partial), CheckpointError);
    }
    SUBCASE("version mismatch is rejected") {
        auto bytes = encode_checkpoint(load_checkpoint(dir / "a.ckpt"));
        bytes[4] = 9;
        CHECK_THROWS_AS(decode_checkpoint(bytes), CheckpointError);
    }
    fs::remove_all(dir);
}
