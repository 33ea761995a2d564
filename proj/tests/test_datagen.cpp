#include <gtest/gtest.h>

#include "ssr/datagen.hpp"
#include "ssr/dictionary.hpp"
#include "ssr/instances.hpp"
#include "ssr/measurement.hpp"

using namespace ssr;

namespace {

SequentialModelSpec desk_spec(std::size_t n, std::size_t m, std::size_t t_len, double sigma2,
                              double nu1, double nu2) {
    SequentialModelSpec s;
    s.A = sample_measurement_matrix(m, n, 7);
    s.D = build_dictionary({DictionaryKind::haar, n, 2});
    s.F = identity(n);
    s.sigma2 = sigma2;
    s.nu1 = nu1;
    s.nu2 = nu2;
    s.t_len = t_len;
    s.h_init = DenseVector(n, 0.0);
    return s;
}

}  // namespace

TEST(SampleSequence, NoiselessObservationsAreExact) {
    const SequentialModelSpec s = desk_spec(8, 4, 6, 0.0, 2.0, 4.0);
    const SequenceSample sample = sample_sequence(s, 42);
    for (std::size_t t = 0; t < s.t_len; ++t)
        EXPECT_EQ(sample.x_seq[t], matvec(s.A, sample.y_seq[t]));
}

TEST(SampleSequence, ReconstructionInvariantHolds) {
    const SequentialModelSpec s = desk_spec(8, 4, 6, 0.01, 2.0, 4.0);
    const SequenceSample sample = sample_sequence(s, 43);
    for (std::size_t t = 0; t < s.t_len; ++t)
        EXPECT_LT(max_abs_diff(sample.y_seq[t], matvec(s.D, sample.h_seq[t])), 1e-12);
}

TEST(SampleSequence, DeterministicPerSeed) {
    const SequentialModelSpec s = desk_spec(8, 4, 5, 0.1, 2.0, 4.0);
    const SequenceSample a = sample_sequence(s, 44);
    const SequenceSample b = sample_sequence(s, 44);
    for (std::size_t t = 0; t < s.t_len; ++t) EXPECT_EQ(a.x_seq[t], b.x_seq[t]);
    const SequenceSample c = sample_sequence(s, 45);
    EXPECT_NE(a.x_seq[0], c.x_seq[0]);
}

TEST(SampleSequence, LargeNu1GivesDenseCodes) {
    SequentialModelSpec s = desk_spec(8, 4, 4, 0.0, 1e12, 4.0);  // threshold ~ 0
    const SequenceSample sample = sample_sequence(s, 46);
    std::size_t zeros = 0;
    for (const auto& h : sample.h_seq)
        for (double v : h)
            if (v == 0.0) ++zeros;
    EXPECT_EQ(zeros, 0u);
}

TEST(SampleSequence, SparsityGrowsWithThreshold) {
    // Sweep 1/nu1 over {0.1, 0.5, 1.0} on fixed seeds and count zeros.
    for (std::uint64_t seed : {47u, 48u, 49u}) {
        std::vector<std::size_t> zero_counts;
        for (double inv_nu1 : {0.1, 0.5, 1.0}) {
            SequentialModelSpec s = desk_spec(16, 8, 8, 0.0, 1.0 / inv_nu1, 4.0);
            const SequenceSample sample = sample_sequence(s, seed);
            std::size_t zeros = 0;
            for (const auto& h : sample.h_seq)
                for (double v : h)
                    if (v == 0.0) ++zeros;
            zero_counts.push_back(zeros);
        }
        EXPECT_LE(zero_counts[0], zero_counts[1]);
        EXPECT_LE(zero_counts[1], zero_counts[2]);
    }
}

TEST(Measure, ZeroNoiseIsExactProduct) {
    SplitMix64 rng(50);
    const DenseMatrix a = sample_measurement_matrix(4, 8, 50);
    std::vector<DenseVector> y;
    for (int t = 0; t < 3; ++t) y.push_back(random_gaussian_vector(8, rng));
    const std::vector<DenseVector> x = measure(y, a, 0.0, 99);
    for (int t = 0; t < 3; ++t) EXPECT_EQ(x[t], matvec(a, y[t]));
}

TEST(Measure, NoiseVarianceNearSigma2) {
    const std::size_t m = 10, t_len = 200;  // M*T = 2000 draws
    const DenseMatrix a = sample_measurement_matrix(m, 8, 51);
    const std::vector<DenseVector> y(t_len, DenseVector(8, 0.0));  // zero signal
    const double sigma2 = 0.25;
    const std::vector<DenseVector> x = measure(y, a, sigma2, 123);
    double acc = 0.0;
    for (const auto& xt : x)
        for (double v : xt) acc += v * v;
    const double var = acc / static_cast<double>(m * t_len);
    EXPECT_GT(var, 0.8 * sigma2);
    EXPECT_LT(var, 1.2 * sigma2);
}

TEST(Measure, DeterministicPerSeed) {
    SplitMix64 rng(52);
    const DenseMatrix a = sample_measurement_matrix(4, 8, 52);
    std::vector<DenseVector> y = {random_gaussian_vector(8, rng)};
    EXPECT_EQ(measure(y, a, 0.5, 7), measure(y, a, 0.5, 7));
}

TEST(Metrics, IdenticalInputs) {
    const std::vector<DenseVector> y = {{1.0, 2.0}, {3.0, 4.0}};
    EXPECT_EQ(mse(y, y), 0.0);
    EXPECT_TRUE(std::isinf(psnr(y, y, 1.0)));
}

TEST(Metrics, KnownErrorValue) {
    const std::vector<DenseVector> y(2, DenseVector(3, 0.0));
    const std::vector<DenseVector> yh(2, DenseVector(3, 0.1));
    EXPECT_NEAR(mse(yh, y), 0.01, 1e-15);
    EXPECT_NEAR(psnr(yh, y, 1.0), 20.0, 1e-10);
}

TEST(Metrics, ScalingConventionConsistent) {
    SplitMix64 rng(53);
    std::vector<DenseVector> y = {random_gaussian_vector(6, rng)};
    std::vector<DenseVector> yh = {random_gaussian_vector(6, rng)};
    std::vector<DenseVector> y255 = {vscale(y[0], 255.0)};
    std::vector<DenseVector> yh255 = {vscale(yh[0], 255.0)};
    // Scaling both signals by 255 drops PSNR by exactly 20 log10(255).
    const double drop = psnr(yh, y, 255.0) - psnr(yh255, y255, 255.0);
    EXPECT_NEAR(drop, 20.0 * std::log10(255.0), 1e-9);
}

TEST(Metrics, PsnrMonotoneInMse) {
    const std::vector<DenseVector> y(1, DenseVector(4, 0.0));
    double prev = std::numeric_limits<double>::infinity();
    for (double e : {0.01, 0.1, 0.5, 2.0}) {
        const std::vector<DenseVector> yh(1, DenseVector(4, e));
        const double p = psnr(yh, y, 1.0);
        EXPECT_LT(p, prev);
        prev = p;
    }
}
