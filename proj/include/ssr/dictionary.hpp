// Orthogonal synthesis dictionaries: identity, Haar, and the 8-tap
// Daubechies wavelet, materialized as explicit N x N matrices.
//
// Wavelet transforms use periodic (circular) convolution at every level, so
// the analysis operator is exactly orthogonal and the synthesis matrix D is
// its transpose. Coefficient order: the N/2^L scaling coefficients first,
// then detail bands from finest (length N/2) to coarsest (length N/2^L).
#pragma once

#include <cstddef>
#include <vector>

#include "ssr/linalg.hpp"

namespace ssr {

enum class DictionaryKind { identity, haar, daubechies8 };

struct DictionarySpec {
    DictionaryKind kind = DictionaryKind::identity;
    std::size_t size = 0;    // N; power of two for wavelet kinds
    std::size_t levels = 1;  // decomposition depth L >= 1
};

namespace detail {

// 8-tap Daubechies scaling filter (extremal phase, 4 vanishing moments).
// "Daubechies-8" is used in the tap-count sense here. Values were obtained by
// spectral factorization of the defining polynomial at 50-digit precision and
// rounded to double; the orthonormality conditions hold to ~1e-16 in double.
inline const std::vector<double>& daubechies8_lowpass() {
    static const std::vector<double> h = {
        0.23037781330889650086,  0.71484657055291564709,  0.63088076792985890788,
        -0.027983769416859854211, -0.18703481171909308408, 0.030841381835560763627,
        0.032883011666885199735, -0.010597401785069032105,
    };
    return h;
}

inline const std::vector<double>& haar_lowpass() {
    static const std::vector<double> h = {0.70710678118654752440, 0.70710678118654752440};
    return h;
}

// Quadrature mirror highpass: g[k] = (-1)^k h[taps-1-k].
inline std::vector<double> qmf_highpass(const std::vector<double>& h) {
    std::vector<double> g(h.size());
    for (std::size_t k = 0; k < h.size(); ++k)
        g[k] = ((k % 2) ? -1.0 : 1.0) * h[h.size() - 1 - k];
    return g;
}

// One analysis level with periodic boundary: y (length n, n even) ->
// approximation a (n/2) and detail d (n/2).
inline void analysis_level(const DenseVector& y, const std::vector<double>& h,
                           const std::vector<double>& g, DenseVector& a, DenseVector& d) {
    const std::size_t n = y.size();
    const std::size_t half = n / 2;
    a.assign(half, 0.0);
    d.assign(half, 0.0);
    for (std::size_t i = 0; i < half; ++i) {
        double av = 0.0, dv = 0.0;
        for (std::size_t k = 0; k < h.size(); ++k) {
            const double v = y[(2 * i + k) % n];
            av += h[k] * v;
            dv += g[k] * v;
        }
        a[i] = av;
        d[i] = dv;
    }
}

// Full L-level analysis of y, emitting coefficients in the documented order.
inline DenseVector analysis(const DenseVector& y, const std::vector<double>& h,
                            const std::vector<double>& g, std::size_t levels) {
    DenseVector cur = y;
    std::vector<DenseVector> details;  // index l-1 = level l = finest first
    for (std::size_t l = 0; l < levels; ++l) {
        DenseVector a, d;
        analysis_level(cur, h, g, a, d);
        details.push_back(std::move(d));
        cur = std::move(a);
    }
    DenseVector out;
    out.reserve(y.size());
    out.insert(out.end(), cur.begin(), cur.end());
    for (const DenseVector& d : details) out.insert(out.end(), d.begin(), d.end());
    return out;
}

inline bool is_power_of_two(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

}  // namespace detail

// Builds the N x N synthesis matrix D (orthonormal columns and rows).
// Identity returns I. Wavelet kinds return the transpose of the explicit
// analysis operator, which equals the inverse transform by orthogonality.
inline DenseMatrix build_dictionary(const DictionarySpec& spec) {
    const std::size_t n = spec.size;
    require(n >= 1, "build_dictionary: size must be >= 1");
    if (spec.kind == DictionaryKind::identity) return identity(n);

    const std::vector<double>& h = (spec.kind == DictionaryKind::haar)
                                       ? detail::haar_lowpass()
                                       : detail::daubechies8_lowpass();
    const std::size_t levels = spec.levels;
    require(levels >= 1, "build_dictionary: levels must be >= 1");
    require(detail::is_power_of_two(n), "build_dictionary: wavelet size must be a power of two");
    require(levels < 64 && n % (std::size_t{1} << levels) == 0,
            "build_dictionary: size must be divisible by 2^levels");
    // Every analysis level must see a signal at least as long as the filter,
    // otherwise periodic wrap-around breaks orthogonality.
    require(n / (std::size_t{1} << (levels - 1)) >= h.size(),
            "build_dictionary: too many levels for this filter length");

    const std::vector<double> g = detail::qmf_highpass(h);

    // Column j of the analysis matrix W is the transform of e_j; D = W^T.
    DenseMatrix d(n, n);
    DenseVector e(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        e[j] = 1.0;
        const DenseVector wj = detail::analysis(e, h, g, levels);
        e[j] = 0.0;
        for (std::size_t i = 0; i < n; ++i) d(j, i) = wj[i];  // transposed store
    }
    return d;
}

}  // namespace ssr
