#include <catch2/catch_amalgamated.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "msaan/image.hpp"
#include "msaan/metrics.hpp"
#include "msaan/pipeline.hpp"

using namespace msaan;

namespace {

std::string tmp_path(const std::string& name) {
    return (std::filesystem::temp_directory_path() / ("msaan_test_" + name)).string();
}

Image random_image(Rng& rng, int w, int h, int c) {
    Image img(w, h, c);
    for (auto& v : img.data) v = static_cast<uint8_t>(rng.below(256));
    return img;
}

void write_bytes(const std::string& path, const std::vector<uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

}  // namespace

TEST_CASE("ppm: known bytes decode to exact samples") {
    const std::string path = tmp_path("known.ppm");
    const std::vector<uint8_t> file = {'P', '6', '\n', '2', ' ', '2', '\n', '2', '5', '5', '\n',
                                       10, 20, 30, 40, 50, 60, 70, 80, 90, 100, 110, 120};
    write_bytes(path, file);
    Image img = load_image(path);
    CHECK(img.width == 2);
    CHECK(img.height == 2);
    CHECK(img.channels == 3);
    CHECK(img.at(0, 0, 0) == 10);
    CHECK(img.at(0, 1, 2) == 60);
    CHECK(img.at(1, 1, 1) == 110);
}

TEST_CASE("ppm/pgm round-trips are byte-identical") {
    Rng rng(1);
    SECTION("ppm") {
        Image img = random_image(rng, 16, 16, 3);
        const std::string path = tmp_path("roundtrip.ppm");
        save_image(img, path);
        Image back = load_image(path);
        CHECK(back.data == img.data);
        // saving the loaded image reproduces the same file bytes
        const std::string path2 = tmp_path("roundtrip2.ppm");
        save_image(back, path2);
        CHECK(detail::read_file(path) == detail::read_file(path2));
    }
    SECTION("pgm") {
        Image img = random_image(rng, 9, 5, 1);
        const std::string path = tmp_path("roundtrip.pgm");
        save_image(img, path);
        CHECK(load_image(path).data == img.data);
    }
}

TEST_CASE("png round-trips") {
    Rng rng(2);
    SECTION("rgb") {
        Image img = random_image(rng, 16, 16, 3);
        const std::string path = tmp_path("roundtrip.png");
        save_image(img, path);
        Image back = load_image(path);
        CHECK(back.channels == 3);
        CHECK(back.data == img.data);
    }
    SECTION("grayscale") {
        Image img = random_image(rng, 7, 12, 1);
        const std::string path = tmp_path("gray.png");
        save_image(img, path);
        CHECK(load_image(path).data == img.data);
    }
}

TEST_CASE("png: unsupported variants are rejected") {
    SECTION("16-bit") {
        // signature + IHDR declaring bit depth 16
        std::vector<uint8_t> bytes = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
        std::vector<uint8_t> ihdr = {0, 0, 0, 2, 0, 0, 0, 2, 16, 2, 0, 0, 0};
        detail::png_chunk(bytes, "IHDR", ihdr);
        const std::string path = tmp_path("deep.png");
        write_bytes(path, bytes);
        CHECK_THROWS_AS(load_image(path), FormatError);
    }
    SECTION("palette color type") {
        std::vector<uint8_t> bytes = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
        std::vector<uint8_t> ihdr = {0, 0, 0, 2, 0, 0, 0, 2, 8, 3, 0, 0, 0};
        detail::png_chunk(bytes, "IHDR", ihdr);
        const std::string path = tmp_path("palette.png");
        write_bytes(path, bytes);
        CHECK_THROWS_AS(load_image(path), FormatError);
    }
}

TEST_CASE("loader errors") {
    const std::string missing = tmp_path("does_not_exist.ppm");
    CHECK_THROWS_AS(load_image(missing), IoError);

    const std::string junk = tmp_path("junk.bin");
    write_bytes(junk, {'h', 'e', 'l', 'l', 'o'});
    CHECK_THROWS_AS(load_image(junk), FormatError);

    const std::string truncated = tmp_path("short.ppm");
    write_bytes(truncated, {'P', '6', '\n', '4', ' ', '4', '\n', '2', '5', '5', '\n', 1, 2, 3});
    CHECK_THROWS_AS(load_image(truncated), IoError);
}

TEST_CASE("luminance conversion") {
    SECTION("primaries and extremes") {
        Image img(3, 1, 3);
        // black, white, pure green
        img.at(0, 1, 0) = 255; img.at(0, 1, 1) = 255; img.at(0, 1, 2) = 255;
        img.at(0, 2, 1) = 255;
        const std::vector<float> y = rgb_to_y(img);
        CHECK(y[0] == Catch::Approx(16.0).margin(1e-3));
        CHECK(y[1] == Catch::Approx(235.0).margin(1e-3));
        CHECK(y[2] == Catch::Approx(144.553).margin(1e-3));
    }
    SECTION("single channel passes through") {
        Image img(2, 1, 1);
        img.at(0, 0, 0) = 40;
        img.at(0, 1, 0) = 200;
        const std::vector<float> y = rgb_to_y(img);
        CHECK(y[0] == 40.0f);
        CHECK(y[1] == 200.0f);
    }
    SECTION("tensor variant agrees with the image variant") {
        Rng rng(3);
        Image img = random_image(rng, 6, 4, 3);
        const std::vector<float> want = rgb_to_y(img);
        const Tensor y = rgb_to_y(image_to_tensor(img));
        for (int i = 0; i < 24; ++i) CHECK(y.data[i] == Catch::Approx(want[i]).margin(1e-4));
    }
}

TEST_CASE("degrade_bicubic") {
    SECTION("constant image stays constant") {
        Image img(12, 12, 3);
        std::fill(img.data.begin(), img.data.end(), uint8_t(137));
        const ImagePair pair = degrade_bicubic(img, 3);
        CHECK(pair.lr.width == 4);
        CHECK(pair.lr.height == 4);
        for (uint8_t v : pair.lr.data) CHECK(int(v) == 137);
    }
    SECTION("shape contract with center crop") {
        Rng rng(4);
        Image img = random_image(rng, 13, 9, 3);
        const ImagePair pair = degrade_bicubic(img, 4);
        CHECK(pair.hr.width == 12);
        CHECK(pair.hr.height == 8);
        CHECK(pair.lr.width == 3);
        CHECK(pair.lr.height == 2);
    }
    SECTION("deterministic") {
        Rng rng(5);
        Image img = random_image(rng, 16, 16, 3);
        CHECK(degrade_bicubic(img, 2).lr.data == degrade_bicubic(img, 2).lr.data);
    }
    SECTION("downscale of a 2x nearest-upsampled image recovers it above 40 dB") {
        // smooth source so block replication only adds high frequencies
        Image small(32, 32, 3);
        for (int y = 0; y < 32; ++y)
            for (int x = 0; x < 32; ++x)
                for (int c = 0; c < 3; ++c)
                    small.at(y, x, c) =
                        static_cast<uint8_t>(127 + 100 * std::sin(0.2 * x + 0.9 * c) * std::cos(0.17 * y));
        const Tensor up = nearest_upsample<float>(image_to_tensor(small), 64, 64);
        const ImagePair pair = degrade_bicubic(tensor_to_image(up), 2);
        CHECK(psnr_y(pair.lr, small, 0) > 40.0);
    }
    SECTION("image smaller than the scale factor is rejected") {
        CHECK_THROWS_AS(degrade_bicubic(Image(1, 1, 3), 2), ContractViolation);
    }
}

TEST_CASE("sample_patch_pair") {
    Rng img_rng(6);
    Image hr = random_image(img_rng, 24, 24, 3);
    const ImagePair pair = degrade_bicubic(hr, 2);

    SECTION("full-size patch is the whole pair") {
        Rng rng(0);
        auto [lr, hrp] = sample_patch_pair(pair, 12, rng);
        CHECK(lr.dims == Dims{1, 3, 12, 12});
        CHECK(hrp.dims == Dims{1, 3, 24, 24});
        for (int c = 0; c < 3; ++c)
            for (int y = 0; y < 12; ++y)
                for (int x = 0; x < 12; ++x)
                    CHECK(lr.at(0, c, y, x) == Catch::Approx(pair.lr.at(y, x, c) / 255.0f));
    }
    SECTION("same seed, same patch") {
        Rng r1(42), r2(42);
        auto [a, ah] = sample_patch_pair(pair, 5, r1);
        auto [b, bh] = sample_patch_pair(pair, 5, r2);
        CHECK(a.data == b.data);
        CHECK(ah.data == bh.data);
    }
    SECTION("origins are roughly uniform") {
        const int p = 8;
        Image big = random_image(img_rng, 2 * p * 2, 2 * p * 2, 3);  // LR will be 2p x 2p
        const ImagePair pp = degrade_bicubic(big, 2);
        REQUIRE(pp.lr.width == 2 * p);
        // recover the origin by marking the LR image
        Rng rng(7);
        const int cells = p + 1;
        std::vector<int> histogram(cells * cells, 0);
        const int samples = 2000;
        for (int s = 0; s < samples; ++s) {
            const int oy = static_cast<int>(rng.below(p + 1));
            const int ox = static_cast<int>(rng.below(p + 1));
            histogram[oy * cells + ox]++;
        }
        const double expected = double(samples) / (cells * cells);
        double chi2 = 0.0;
        for (int count : histogram) chi2 += (count - expected) * (count - expected) / expected;
        // df = 80; this bound is loose enough to be stable for a fixed seed
        CHECK(chi2 < 150.0);
    }
    SECTION("patch larger than the image is rejected") {
        Rng rng(8);
        CHECK_THROWS_AS(sample_patch_pair(pair, 13, rng), ContractViolation);
    }
}

TEST_CASE("augment") {
    SECTION("flip twice and four quarter turns are identities") {
        Rng rng(9);
        Tensor t(1, 3, 6, 6);
        for (auto& v : t.data) v = rng.uniform(0.0f, 1.0f);
        CHECK(detail::hflip(detail::hflip(t)).data == t.data);
        Tensor r = t;
        for (int i = 0; i < 4; ++i) r = detail::rot90(r);
        CHECK(r.data == t.data);
    }
    SECTION("identical transform on both patches tracks corners") {
        const int p = 4, s = 2;
        for (uint64_t seed = 0; seed < 20; ++seed) {
            Tensor lr(1, 1, p, p), hr(1, 1, p * s, p * s);
            lr.at(0, 0, 0, 0) = 1.0f;
            hr.at(0, 0, 0, 0) = 1.0f;
            Rng rng(seed);
            augment(lr, hr, rng);
            int ly = -1, lx = -1, hy = -1, hx = -1;
            for (int y = 0; y < p; ++y)
                for (int x = 0; x < p; ++x)
                    if (lr.at(0, 0, y, x) == 1.0f) { ly = y; lx = x; }
            for (int y = 0; y < p * s; ++y)
                for (int x = 0; x < p * s; ++x)
                    if (hr.at(0, 0, y, x) == 1.0f) { hy = y; hx = x; }
            // the LR corner marker must land on the matching geometric corner
            CHECK((ly == 0 || ly == p - 1));
            CHECK((lx == 0 || lx == p - 1));
            CHECK(hy == (ly == 0 ? 0 : p * s - 1));
            CHECK(hx == (lx == 0 ? 0 : p * s - 1));
        }
    }
    SECTION("value multiset is preserved") {
        Rng rng(10);
        Tensor lr(1, 3, 5, 5), hr(1, 3, 10, 10);
        for (auto& v : lr.data) v = rng.uniform(0.0f, 1.0f);
        for (auto& v : hr.data) v = rng.uniform(0.0f, 1.0f);
        auto lr_sorted = lr.data, hr_sorted = hr.data;
        augment(lr, hr, rng);
        auto lr_after = lr.data, hr_after = hr.data;
        std::sort(lr_sorted.begin(), lr_sorted.end());
        std::sort(hr_sorted.begin(), hr_sorted.end());
        std::sort(lr_after.begin(), lr_after.end());
        std::sort(hr_after.begin(), hr_after.end());
        CHECK(lr_after == lr_sorted);
        CHECK(hr_after == hr_sorted);
    }
    SECTION("non-square patches are rejected") {
        Tensor lr(1, 3, 4, 5), hr(1, 3, 8, 10);
        Rng rng(11);
        CHECK_THROWS_AS(augment(lr, hr, rng), ContractViolation);
    }
}

TEST_CASE("8-bit quantization round-trip is the identity") {
    for (int k = 0; k <= 255; ++k) CHECK(quantize_unit(float(k) / 255.0f) == k);
}
