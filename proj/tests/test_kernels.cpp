#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "flowsynth/kernels/kernels.hpp"
#include "flowsynth/rng.hpp"

using namespace flowsynth;
namespace k = flowsynth::kernels;

namespace {

template <typename T>
std::vector<T> random_vec(Rng& rng, std::size_t n, double scale = 1.0) {
    std::vector<T> v(n);
    for (auto& x : v) x = static_cast<T>(rng.normal() * scale);
    return v;
}

template <typename T>
void expect_close(const std::vector<T>& a, const std::vector<T>& b, double rel) {
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        const double da = a[i], db = b[i];
        const double denom = std::max({std::abs(da), std::abs(db), 1.0});
        CHECK(std::abs(da - db) / denom <= rel);
    }
}

constexpr double kRelF32 = 2e-5;
constexpr double kRelF64 = 1e-12;

template <typename T>
double rel_tol() {
    return std::is_same_v<T, float> ? kRelF32 : kRelF64;
}

// The scalar table is the reference; every other available backend must
// agree with it (exactly for pure elementwise ops, up to re-association
// tolerance for reductions and fused updates).
template <typename T>
void run_equivalence(const k::OpsTable<T>& ref, const k::OpsTable<T>& alt) {
    Rng rng(20240811);
    const double rel = rel_tol<T>();
    for (std::size_t n : {1u, 3u, 7u, 8u, 16u, 33u, 127u, 256u, 1000u}) {
        auto a = random_vec<T>(rng, n);
        auto b = random_vec<T>(rng, n);

        std::vector<T> r1(n), r2(n);
        ref.add(a.data(), b.data(), r1.data(), n);
        alt.add(a.data(), b.data(), r2.data(), n);
        CHECK(r1 == r2);

        ref.sub(a.data(), b.data(), r1.data(), n);
        alt.sub(a.data(), b.data(), r2.data(), n);
        CHECK(r1 == r2);

        ref.mul(a.data(), b.data(), r1.data(), n);
        alt.mul(a.data(), b.data(), r2.data(), n);
        CHECK(r1 == r2);

        ref.scale(a.data(), T(1.37), r1.data(), n);
        alt.scale(a.data(), T(1.37), r2.data(), n);
        CHECK(r1 == r2);

        std::vector<T> y1 = b, y2 = b;
        ref.axpy(T(0.71), a.data(), y1.data(), n);
        alt.axpy(T(0.71), a.data(), y2.data(), n);
        expect_close(y1, y2, rel);

        CHECK(std::abs(ref.dot(a.data(), b.data(), n) - alt.dot(a.data(), b.data(), n)) <=
              rel * n);
        CHECK(std::abs(ref.sum(a.data(), n) - alt.sum(a.data(), n)) <= rel * n);
        CHECK(std::abs(ref.sumsq(a.data(), n) - alt.sumsq(a.data(), n)) <= rel * n);
        CHECK(ref.max(a.data(), n) == alt.max(a.data(), n));

        auto gain = random_vec<T>(rng, n);
        auto bias = random_vec<T>(rng, n);
        ref.normalize_affine(a.data(), r1.data(), n, T(0.2), T(1.7), gain.data(), bias.data());
        alt.normalize_affine(a.data(), r2.data(), n, T(0.2), T(1.7), gain.data(), bias.data());
        expect_close(r1, r2, rel);

        k::AdamwArgs<T> args{T(1e-3), T(0.9), T(0.999), T(1e-8), T(0.01), T(10), T(1000)};
        std::vector<T> p1 = a, p2 = a, m1(n, T(0.1)), m2(n, T(0.1)), v1(n, T(0.2)), v2(n, T(0.2));
        ref.adamw(p1.data(), b.data(), m1.data(), v1.data(), n, args);
        alt.adamw(p2.data(), b.data(), m2.data(), v2.data(), n, args);
        expect_close(p1, p2, rel);
        expect_close(m1, m2, rel);
        expect_close(v1, v2, rel);
    }

    // matrix products, including the transposed forms and accumulation
    for (auto [m, kk, n] : {std::array<std::size_t, 3>{1, 1, 1},
                            std::array<std::size_t, 3>{3, 5, 7},
                            std::array<std::size_t, 3>{8, 16, 8},
                            std::array<std::size_t, 3>{13, 31, 17}}) {
        auto A = random_vec<T>(rng, m * kk);
        auto B = random_vec<T>(rng, kk * n);
        auto Bt = random_vec<T>(rng, n * kk);
        auto C0 = random_vec<T>(rng, m * n);

        std::vector<T> c1 = C0, c2 = C0;
        ref.matmul(A.data(), B.data(), c1.data(), m, kk, n, false);
        alt.matmul(A.data(), B.data(), c2.data(), m, kk, n, false);
        expect_close(c1, c2, rel * kk);

        c1 = C0;
        c2 = C0;
        ref.matmul(A.data(), B.data(), c1.data(), m, kk, n, true);
        alt.matmul(A.data(), B.data(), c2.data(), m, kk, n, true);
        expect_close(c1, c2, rel * kk);

        c1.assign(m * n, T(0));
        c2.assign(m * n, T(0));
        ref.matmul_nt(A.data(), Bt.data(), c1.data(), m, kk, n, false);
        alt.matmul_nt(A.data(), Bt.data(), c2.data(), m, kk, n, false);
        expect_close(c1, c2, rel * kk);

        std::vector<T> d1(kk * n, T(0.5)), d2(kk * n, T(0.5));
        auto G = random_vec<T>(rng, m * n);
        ref.matmul_tn(A.data(), G.data(), d1.data(), m, kk, n, true);
        alt.matmul_tn(A.data(), G.data(), d2.data(), m, kk, n, true);
        expect_close(d1, d2, rel * m);
    }
}

} // namespace

TEST_CASE("active backend reports a valid table") {
    const auto b = k::active_backend();
    CHECK(k::table<float>(b) != nullptr);
    CHECK(k::table<double>(b) != nullptr);
    MESSAGE("active kernel backend: ", k::backend_name(b));
}

TEST_CASE("simd variants match the scalar reference (float)") {
    const auto* scalar = k::table<float>(k::Backend::scalar);
    REQUIRE(scalar != nullptr);
    const auto* avx2 = k::table<float>(k::Backend::avx2);
    if (avx2 == nullptr || k::active_backend() != k::Backend::avx2) {
        MESSAGE("avx2 not available on this host; skipping");
        return;
    }
    run_equivalence(*scalar, *avx2);
}

TEST_CASE("simd variants match the scalar reference (double)") {
    const auto* scalar = k::table<double>(k::Backend::scalar);
    REQUIRE(scalar != nullptr);
    const auto* avx2 = k::table<double>(k::Backend::avx2);
    if (avx2 == nullptr || k::active_backend() != k::Backend::avx2) {
        MESSAGE("avx2 not available on this host; skipping");
        return;
    }
    run_equivalence(*scalar, *avx2);
}

TEST_CASE("matmul against a hand-computed product") {
    const auto& t = k::active<double>();
    // [[1,2],[3,4]] x [[5,6],[7,8]] = [[19,22],[43,50]]
    const double A[4] = {1, 2, 3, 4};
    const double B[4] = {5, 6, 7, 8};
    double C[4];
    t.matmul(A, B, C, 2, 2, 2, false);
    CHECK(C[0] == doctest::Approx(19));
    CHECK(C[1] == doctest::Approx(22));
    CHECK(C[2] == doctest::Approx(43));
    CHECK(C[3] == doctest::Approx(50));

    // A x B^T with B stored row-major as [n, k]
    double D[4];
    t.matmul_nt(A, B, D, 2, 2, 2, false);
    CHECK(D[0] == doctest::Approx(1 * 5 + 2 * 6));
    CHECK(D[1] == doctest::Approx(1 * 7 + 2 * 8));

    // A^T x B
    double E[4];
    t.matmul_tn(A, B, E, 2, 2, 2, false);
    CHECK(E[0] == doctest::Approx(1 * 5 + 3 * 7));
    CHECK(E[1] == doctest::Approx(1 * 6 + 3 * 8));
}

TEST_CASE("reductions agree with a naive loop") {
    Rng rng(7);
    const auto& t = k::active<double>();
    auto v = random_vec<double>(rng, 257);
    auto w = random_vec<double>(rng, 257);
    double s = 0, ss = 0, d = 0, mx = v[0];
    for (std::size_t i = 0; i < v.size(); ++i) {
        s += v[i];
        ss += v[i] * v[i];
        d += v[i] * w[i];
        mx = std::max(mx, v[i]);
    }
    CHECK(t.sum(v.data(), v.size()) == doctest::Approx(s).epsilon(1e-12));
    CHECK(t.sumsq(v.data(), v.size()) == doctest::Approx(ss).epsilon(1e-12));
    CHECK(t.dot(v.data(), w.data(), v.size()) == doctest::Approx(d).epsilon(1e-12));
    CHECK(t.max(v.data(), v.size()) == mx);
}
