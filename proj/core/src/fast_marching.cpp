#include "prism/fast_marching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

namespace prism {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct HeapEntry {
    double dist;
    size_t idx;
    bool operator>(const HeapEntry& o) const {
        return dist > o.dist || (dist == o.dist && idx > o.idx);
    }
};

// Unified 2D/3D solver; 2D runs with nz = 1.
class Solver {
public:
    Solver(const float* values, int nx, int ny, int nz, double h)
        : v_(values), nx_(nx), ny_(ny), nz_(nz), h_(h), total_(size_t(nx) * ny * nz) {}

    // Unsigned distance to the zero set; NoInterfaceError when none exists.
    std::vector<double> solve() {
        std::vector<double> d(total_, kInf);
        std::vector<uint8_t> frozen(total_, 0);
        std::priority_queue<HeapEntry, std::vector<HeapEntry>, std::greater<>> heap;

        // Seed the band by linear interpolation across sign changes; per-axis
        // crossings combine as 1/d^2 = sum 1/dk^2 so diagonal interface
        // pieces seed with the proper point-line distance.
        bool any = false;
        const size_t strides[3] = {1, size_t(nx_), size_t(nx_) * ny_};
        for (size_t i = 0; i < total_; ++i) {
            int c[3] = {int(i % nx_), int((i / nx_) % ny_), int(i / (size_t(nx_) * ny_))};
            int extent[3] = {nx_, ny_, nz_};
            bool inside = v_[i] < 0.f;
            double inv2 = 0;
            bool hit = false;
            for (int ax = 0; ax < 3; ++ax) {
                double dk = kInf;
                for (int dir = -1; dir <= 1; dir += 2) {
                    if (c[ax] + dir < 0 || c[ax] + dir >= extent[ax]) continue;
                    size_t j = dir < 0 ? i - strides[ax] : i + strides[ax];
                    if ((v_[j] < 0.f) == inside) continue;
                    double a = std::abs(double(v_[i])), b = std::abs(double(v_[j]));
                    double frac = (a + b) > 0 ? a / (a + b) : 0.0;
                    dk = std::min(dk, std::max(frac * h_, 1e-12 * h_));
                }
                if (dk < kInf) {
                    inv2 += 1.0 / (dk * dk);
                    hit = true;
                }
            }
            if (hit) {
                double best = 1.0 / std::sqrt(inv2);
                d[i] = best;
                heap.push({best, i});
                any = true;
            }
        }
        if (!any) throw NoInterfaceError();

        while (!heap.empty()) {
            auto [dist, i] = heap.top();
            heap.pop();
            if (frozen[i]) continue;
            frozen[i] = 1;
            for_neighbors(i, [&](size_t j) {
                if (frozen[j]) return;
                double cand = eikonal_update(j, d, frozen);
                if (cand < d[j]) {
                    d[j] = cand;
                    heap.push({cand, j});
                }
            });
        }
        return d;
    }

private:
    template <class F>
    void for_neighbors(size_t i, F&& f) const {
        int x = int(i % nx_), y = int((i / nx_) % ny_), z = int(i / (size_t(nx_) * ny_));
        if (x > 0) f(i - 1);
        if (x + 1 < nx_) f(i + 1);
        if (y > 0) f(i - nx_);
        if (y + 1 < ny_) f(i + nx_);
        if (z > 0) f(i - size_t(nx_) * ny_);
        if (z + 1 < nz_) f(i + size_t(nx_) * ny_);
    }

    struct AxisTerm {
        double alpha = 0, beta = kInf;  // contributes alpha^2 (t - beta)^2
    };

    // Per-axis upwind stencil: second order where two causally frozen
    // values exist, first order otherwise.
    AxisTerm axis_term(size_t i, size_t stride, int coord, int extent,
                       const std::vector<double>& d, const std::vector<uint8_t>& frozen) const {
        AxisTerm best;
        for (int dir = -1; dir <= 1; dir += 2) {
            int c1 = coord + dir;
            if (c1 < 0 || c1 >= extent) continue;
            size_t j1 = dir < 0 ? i - stride : i + stride;
            if (!frozen[j1]) continue;
            double d1 = d[j1];
            AxisTerm t{1.0 / h_, d1};
            int c2 = coord + 2 * dir;
            if (c2 >= 0 && c2 < extent) {
                size_t j2 = dir < 0 ? i - 2 * stride : i + 2 * stride;
                if (frozen[j2] && d[j2] <= d1)
                    t = {1.5 / h_, (4.0 * d1 - d[j2]) / 3.0};
            }
            if (best.beta == kInf || t.beta < best.beta ||
                (t.beta == best.beta && t.alpha > best.alpha))
                best = t;
        }
        return best;
    }

    // Upwind solution of |grad d| = 1 at cell i (second order where possible).
    double eikonal_update(size_t i, const std::vector<double>& d,
                          const std::vector<uint8_t>& frozen) const {
        int x = int(i % nx_), y = int((i / nx_) % ny_), z = int(i / (size_t(nx_) * ny_));
        AxisTerm a[3] = {
            axis_term(i, 1, x, nx_, d, frozen),
            axis_term(i, size_t(nx_), y, ny_, d, frozen),
            axis_term(i, size_t(nx_) * ny_, z, nz_, d, frozen),
        };
        std::sort(a, a + 3, [](const AxisTerm& p, const AxisTerm& q) { return p.beta < q.beta; });
        // Accumulate axes in increasing beta; solve sum alpha^2 (t-beta)^2 = 1.
        double A = 0, B = 0, C = -1;
        double best = kInf;
        for (int k = 0; k < 3; ++k) {
            if (a[k].beta == kInf) break;
            A += a[k].alpha * a[k].alpha;
            B += a[k].alpha * a[k].alpha * a[k].beta;
            C += a[k].alpha * a[k].alpha * a[k].beta * a[k].beta;
            double disc = B * B - A * C;
            if (disc < 0) break;  // keep the previous candidate
            double cand = (B + std::sqrt(disc)) / A;
            if (cand >= a[k].beta) best = cand;
            if (k == 2 || a[k + 1].beta == kInf || best <= a[k + 1].beta) break;
        }
        if (best == kInf) {
            // degenerate fallback: march from the smallest frozen neighbor
            for (int k = 0; k < 3; ++k)
                if (a[k].beta < kInf) best = std::min(best, a[k].beta + h_);
        }
        return best;
    }

    const float* v_;
    int nx_, ny_, nz_;
    double h_;
    size_t total_;
};

template <class G>
G reinit_impl(const G& g, int nz) {
    Solver solver(g.v.data(), g.n, g.n, nz, 1.0 / g.n);
    auto d = solver.solve();
    G out(g.n);
    for (size_t i = 0; i < g.count(); ++i)
        out.v[i] = float(g.v[i] < 0.f ? -d[i] : d[i]);
    return out;
}

template <class G>
G round_impl(const G& g, float radius) {
    if (radius <= 0.f) throw std::invalid_argument("round_offset: radius must be positive");
    G eroded = g;
    for (auto& x : eroded.v) x += radius;
    bool alive = std::any_of(eroded.v.begin(), eroded.v.end(), [](float x) { return x < 0.f; });
    if (!alive) throw ShapeEliminatedError();
    G r1 = [&] {
        try {
            return fast_march_reinit(eroded);
        } catch (const NoInterfaceError&) {
            throw ShapeEliminatedError();
        }
    }();
    for (auto& x : r1.v) x -= radius;
    return fast_march_reinit(r1);
}

template <class B, class G>
G sdf_from_binary_impl(const B& mask) {
    G field(mask.n);
    for (size_t i = 0; i < mask.count(); ++i) field.v[i] = mask.v[i] ? -1.f : 1.f;
    return fast_march_reinit(field);
}

}  // namespace

SdfGrid2 fast_march_reinit(const SdfGrid2& g) { return reinit_impl(g, 1); }
SdfGrid3 fast_march_reinit(const SdfGrid3& g) { return reinit_impl(g, g.n); }

SdfGrid2 round_offset(const SdfGrid2& g, float radius) { return round_impl(g, radius); }
SdfGrid3 round_offset(const SdfGrid3& g, float radius) { return round_impl(g, radius); }

SdfGrid2 sdf_from_binary(const BinaryGrid2& mask) {
    return sdf_from_binary_impl<BinaryGrid2, SdfGrid2>(mask);
}
SdfGrid3 sdf_from_binary(const BinaryGrid3& mask) {
    return sdf_from_binary_impl<BinaryGrid3, SdfGrid3>(mask);
}

}  // namespace prism
