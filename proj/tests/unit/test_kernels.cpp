#include <catch_amalgamated.hpp>

#include <cmath>
#include <fstream>
#include <filesystem>
#include <regex>
#include <string>
#include <vector>

#include "pdv/kernels/normal.hpp"
#include "pdv/kernels/parallel.hpp"
#include "pdv/kernels/rng.hpp"
#include "pdv/kernels/stats.hpp"

using Catch::Approx;
using namespace pdv;

TEST_CASE("normal cdf at reference points") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(1.959963984540054) == Approx(0.975).epsilon(1e-14));
    CHECK(normal_cdf(-1.959963984540054) == Approx(0.025).epsilon(1e-13));
    // Lower tail keeps relative precision: Phi(-10) = 7.6198530241605e-24.
    CHECK(normal_cdf(-10.0) == Approx(7.619853024160527e-24).epsilon(1e-12));
    CHECK(normal_cdf(3.0) + normal_cdf(-3.0) == Approx(1.0).epsilon(1e-15));
}

TEST_CASE("normal inverse cdf inverts the cdf") {
    // Above x = 0 the probability 1 - Phi(x) is only stored to absolute 1e-16,
    // which alone moves the round trip by 1e-16 / phi(x); the upper half goes
    // through the mirror image instead.
    for (double x = -6.0; x <= 6.0; x += 0.01) {
        const double back = x <= 0.0 ? normal_inv_cdf(normal_cdf(x)) : -normal_inv_cdf(normal_cdf(-x));
        CHECK(std::abs(back - x) < 1e-9);
    }
    for (double p = 0.01; p < 1.0; p += 0.01) {
        CHECK(normal_cdf(normal_inv_cdf(p)) == Approx(p).epsilon(1e-14));
    }
    CHECK(normal_inv_cdf(0.5) == 0.0);
    CHECK_THROWS_AS(normal_inv_cdf(0.0), InputError);
    CHECK_THROWS_AS(normal_inv_cdf(1.0), InputError);
    CHECK_THROWS_AS(normal_inv_cdf(-0.1), InputError);
}

TEST_CASE("normal pdf integrates the cdf") {
    // Central difference of the cdf against the pdf.
    for (double x : {-3.0, -1.0, 0.0, 0.5, 2.0}) {
        const double h = 1e-5;
        CHECK((normal_cdf(x + h) - normal_cdf(x - h)) / (2 * h) == Approx(normal_pdf(x)).epsilon(1e-8));
    }
}

TEST_CASE("streams are deterministic and split streams differ") {
    RngStream a = make_stream(42), b = make_stream(42);
    for (int i = 0; i < 100; ++i) CHECK(next_bits(a) == next_bits(b));

    const RngStream parent = make_stream(7);
    RngStream s1 = split(parent, 1), s2 = split(parent, 2);
    CHECK(s1.key != s2.key);
    CHECK(next_bits(s1) != next_bits(s2));
    // Splitting does not advance the parent.
    CHECK(split(parent, 1) == split(parent, 1));
}

TEST_CASE("gaussian draws have the right moments") {
    RngStream s = make_stream(2024);
    const auto z = sample_gaussians(s, 1000000);
    const double m = mean(z);
    CHECK(std::abs(m) < 4.0 / 1000.0);
    CHECK(sample_variance(z) == Approx(1.0).epsilon(0.005));
}

TEST_CASE("split streams are uncorrelated") {
    const RngStream parent = make_stream(99);
    for (std::uint64_t i = 0; i < 3; ++i) {
        RngStream a = split(parent, i), b = split(parent, i + 1);
        const auto x = sample_gaussians(a, 1000000);
        const auto y = sample_gaussians(b, 1000000);
        double sxy = 0, sxx = 0, syy = 0;
        for (std::size_t k = 0; k < x.size(); ++k) {
            sxy += x[k] * y[k];
            sxx += x[k] * x[k];
            syy += y[k] * y[k];
        }
        CHECK(std::abs(sxy / std::sqrt(sxx * syy)) < 0.01);
    }
}

TEST_CASE("uniforms stay in the open unit interval") {
    RngStream s = make_stream(3);
    double lo = 1, hi = 0;
    for (int i = 0; i < 100000; ++i) {
        const double u = next_uniform(s);
        lo = std::min(lo, u);
        hi = std::max(hi, u);
    }
    CHECK(lo > 0.0);
    CHECK(hi < 1.0);
    CHECK(detail::to_open_unit(0) > 0.0);
    CHECK(detail::to_open_unit(~0ull) < 1.0);
}

TEST_CASE("next_below and shuffle") {
    RngStream s = make_stream(11);
    std::vector<int> counts(5, 0);
    for (int i = 0; i < 50000; ++i) ++counts[next_below(s, 5)];
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);

    std::vector<int> v{0, 1, 2, 3, 4, 5, 6, 7, 8, 9};
    shuffle(s, std::span<int>(v));
    std::vector<int> sorted = v;
    std::sort(sorted.begin(), sorted.end());
    for (int i = 0; i < 10; ++i) CHECK(sorted[i] == i);
}

TEST_CASE("mean estimates and standard errors") {
    const std::vector<double> xs{1, 2, 3, 4};
    CHECK(mean(xs) == 2.5);
    CHECK(sample_variance(xs) == Approx(5.0 / 3.0));
    const auto e = estimate_mean(xs);
    CHECK(e.stderr_ == Approx(std::sqrt(5.0 / 3.0 / 4.0)));
    // Antithetic pairs (1,2) and (3,4) average to 1.5 and 3.5.
    const auto a = estimate_mean_antithetic(xs);
    CHECK(a.mean == 2.5);
    CHECK(a.stderr_ == Approx(std::sqrt(2.0 / 2.0)));
}

TEST_CASE("riemann and geometric sums") {
    const std::vector<double> v{1, 2, 3};
    CHECK(left_riemann(v, 0.5) == Approx(3.0));
    // sum_{k=1}^n q^k against the closed form q (1 - q^n) / (1 - q).
    for (double q : {0.1, 0.5, 0.9, 0.999}) {
        for (std::size_t n : {1u, 10u, 1000u}) {
            CHECK(geometric_sum(q, n) == Approx(q * (1 - std::pow(q, n)) / (1 - q)).epsilon(1e-12));
        }
    }
    CHECK(geometric_sum(1.0, 7) == 7.0);
}

TEST_CASE("histogram counts every sample") {
    const std::vector<double> xs{-1.0, 0.05, 0.15, 0.25, 0.95, 2.0};
    const auto h = make_histogram(xs, 10, 0.0, 1.0);
    CHECK(h.edges.size() == 11);
    CHECK(h.total() == xs.size());
    for (std::size_t i = 1; i < h.edges.size(); ++i) CHECK(h.edges[i] > h.edges[i - 1]);
    CHECK(h.counts.front() == 2);
    CHECK(h.counts.back() == 2);
    CHECK(quantile({1, 2, 3, 4, 5}, 0.5) == 3.0);
}

TEST_CASE("parallel blocks reduce the same way for any thread count") {
    const std::size_t n = 10007;
    auto run = [&](unsigned threads) {
        std::vector<double> part(n);
        parallel_for(n, threads, [&](std::size_t i) {
            RngStream s = split(make_stream(5), i);
            part[i] = next_uniform(s);
        });
        double acc = 0;
        for (double x : part) acc += x;
        return acc;
    };
    const double one = run(1);
    CHECK(run(2) == one);
    CHECK(run(3) == one);
    CHECK(run(8) == one);
}

TEST_CASE("parallel blocks rethrow the lowest failing block") {
    CHECK_THROWS_WITH(parallel_for(100, 4,
                                   [](std::size_t i) {
                                       if (i >= 30) throw std::runtime_error("block " + std::to_string(i));
                                   }),
                      "block 30");
}

// Every random draw must come from RngStream.
TEST_CASE("no other entropy source in the sources") {
    namespace fs = std::filesystem;
    const fs::path root = PDV_SOURCE_DIR;
    const std::regex banned(R"(random_device|std::rand\b|\bsrand\s*\(|mt19937|default_random_engine|minstd_rand|ranlux|knuth_b|time\s*\(\s*(NULL|nullptr|0)\s*\))");
    std::size_t scanned = 0;
    for (const char* dir : {"include", "tools"}) {
        for (const auto& e : fs::recursive_directory_iterator(root / dir)) {
            if (!e.is_regular_file()) continue;
            const auto ext = e.path().extension();
            if (ext != ".hpp" && ext != ".cpp") continue;
            std::ifstream in(e.path());
            std::string line;
            int no = 0;
            while (std::getline(in, line)) {
                ++no;
                INFO(e.path().string() << ":" << no << ": " << line);
                CHECK_FALSE(std::regex_search(line, banned));
            }
            ++scanned;
        }
    }
    CHECK(scanned > 5);
}
