#include <gtest/gtest.h>

#include "ssr/dictionary.hpp"
#include "ssr/linalg.hpp"

using namespace ssr;

namespace {

double orthogonality_defect(const DenseMatrix& d) {
    const double ddt = max_abs_diff(matmul(d, transpose(d)), identity(d.rows));
    const double dtd = max_abs_diff(matmul(transpose(d), d), identity(d.rows));
    return std::max(ddt, dtd);
}

}  // namespace

TEST(Dictionary, IdentityKind) {
    const DenseMatrix d = build_dictionary({DictionaryKind::identity, 8, 1});
    EXPECT_EQ(max_abs_diff(d, identity(8)), 0.0);
}

TEST(Dictionary, TwoPointHaar) {
    const DenseMatrix d = build_dictionary({DictionaryKind::haar, 2, 1});
    const double s = 0.70710678118654752440;
    EXPECT_NEAR(d(0, 0), s, 1e-15);
    EXPECT_NEAR(d(0, 1), s, 1e-15);
    EXPECT_NEAR(d(1, 0), s, 1e-15);
    EXPECT_NEAR(d(1, 1), -s, 1e-15);
}

TEST(Dictionary, Daubechies8Orthogonal) {
    const DenseMatrix d = build_dictionary({DictionaryKind::daubechies8, 32, 2});
    EXPECT_LT(orthogonality_defect(d), 1e-12);
}

TEST(Dictionary, OrthogonalityAcrossSizesAndLevels) {
    for (std::size_t n : {8u, 32u, 128u}) {
        for (std::size_t levels = 1; (n >> levels) >= 4; ++levels) {
            for (DictionaryKind kind : {DictionaryKind::haar, DictionaryKind::daubechies8}) {
                if (kind == DictionaryKind::daubechies8 && n / (1u << (levels - 1)) < 8) continue;
                const DenseMatrix d = build_dictionary({kind, n, levels});
                EXPECT_LT(orthogonality_defect(d), 1e-12)
                    << "kind=" << static_cast<int>(kind) << " n=" << n << " L=" << levels;
            }
        }
    }
}

TEST(Dictionary, HaarEnergyCompactionOnConstantSignal) {
    // A constant signal is pure approximation: every detail row must kill it.
    const DenseMatrix d = build_dictionary({DictionaryKind::haar, 16, 2});
    DenseVector ones(16, 1.0);
    const DenseVector coeffs = matvec_t(d, ones);  // analysis = D^T y
    // Approximation block has length 16/4 = 4; details must vanish.
    for (std::size_t i = 4; i < 16; ++i) EXPECT_NEAR(coeffs[i], 0.0, 1e-12);
    EXPECT_NEAR(norm2sq(coeffs), 16.0, 1e-10);  // orthogonal transform preserves energy
}

TEST(Dictionary, InvalidSpecsThrow) {
    EXPECT_THROW(build_dictionary({DictionaryKind::haar, 12, 1}), std::invalid_argument);
    EXPECT_THROW(build_dictionary({DictionaryKind::haar, 8, 4}), std::invalid_argument);
    EXPECT_THROW(build_dictionary({DictionaryKind::daubechies8, 8, 2}), std::invalid_argument);
    EXPECT_THROW(build_dictionary({DictionaryKind::daubechies8, 4, 1}), std::invalid_argument);
    EXPECT_THROW(build_dictionary({DictionaryKind::haar, 16, 0}), std::invalid_argument);
}
