#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "rar/degrade.hpp"
#include "rar/metrics.hpp"

using namespace rar;

TEST_CASE("psnr closed forms") {
    Image x = gen_clean(17, 1, 32)[0];
    CHECK(psnr(x, x) == kPsnrCap);

    Image zeros = make_image(32, 32);
    Image ones = Image::full({32, 32, 3}, 1.0f);
    CHECK(psnr(zeros, ones) == doctest::Approx(0.0).epsilon(1e-9));

    Image half = Image::full({32, 32, 3}, 0.5f);
    CHECK(psnr(zeros, half) == doctest::Approx(10.0 * std::log10(1.0 / 0.25)).epsilon(1e-9));

    Image small = make_image(8, 8);
    CHECK_THROWS_AS(psnr(zeros, small), std::invalid_argument);
}

TEST_CASE("psnr symmetry") {
    const auto a = gen_clean(1, 2, 32);
    CHECK(psnr(a[0], a[1]) == psnr(a[1], a[0]));
}

TEST_CASE("psnr strictly decreases with growing noise") {
    const Image x = gen_clean(31, 1, 32)[0];
    double prev = 1e9;
    for (double sigma : {0.05, 0.1, 0.2}) {
        const double p = psnr(apply(x, DegradationSpec::noise(sigma), 3), x);
        CHECK(p < prev);
        prev = p;
    }
}

TEST_CASE("ssim identity and constant cases are exactly one") {
    const Image x = gen_clean(13, 1, 32)[0];
    CHECK(ssim(x, x) == 1.0);
    Image half = Image::full({32, 32, 3}, 0.5f);
    CHECK(ssim(half, half) == 1.0);
}

TEST_CASE("ssim symmetry and bounds") {
    const auto imgs = gen_clean(2, 2, 32);
    const double s1 = ssim(imgs[0], imgs[1]);
    const double s2 = ssim(imgs[1], imgs[0]);
    CHECK(s1 == s2);
    CHECK(s1 <= 1.0);
    CHECK(s1 >= -1.0);
}

TEST_CASE("ssim of an image against its negative is negative") {
    // high-contrast checker pattern
    Image x = make_image(32, 32);
    for (int y = 0; y < 32; ++y)
        for (int xx = 0; xx < 32; ++xx)
            for (int c = 0; c < 3; ++c)
                x[(static_cast<std::size_t>(y) * 32 + xx) * 3 + c] = ((y / 4 + xx / 4) % 2) ? 0.9f : 0.1f;
    Image inv = x;
    for (auto& p : inv.data) p = 1.0f - p;
    CHECK(ssim(x, inv) < 0.0);
}

TEST_CASE("ssim rejects images smaller than the window") {
    Image tiny = make_image(8, 8);
    CHECK_THROWS_AS(ssim(tiny, tiny), std::invalid_argument);
}

TEST_CASE("metric report csv has per-sample rows plus aggregates") {
    MetricReport report;
    report.add("s0", 20.0, 0.8);
    report.add("s1", 30.0, 0.9);
    const auto path = (std::filesystem::temp_directory_path() / "rar_metrics_test.csv").string();
    report.write_csv(path);
    std::ifstream is(path);
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(is, line)) lines.push_back(line);
    REQUIRE(lines.size() == 5);  // header + 2 samples + mean + std
    CHECK(lines[0] == "sample,psnr_db,ssim");
    CHECK(lines[3].rfind("aggregate_mean,25,", 0) == 0);
    std::filesystem::remove(path);
}
