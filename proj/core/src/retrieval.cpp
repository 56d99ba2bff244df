#include "prism/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <deque>
#include <fstream>
#include <limits>
#include <random>
#include <stdexcept>

#include "json.hpp"
#include "prism/fast_marching.hpp"
#include "prism/nets.hpp"

namespace prism::retrieval {

namespace {

// BFS labeling; 8-connectivity for foreground, 4 for background floods.
std::vector<int> label_components(const BinaryGrid2& m, bool foreground, bool eight, int& count) {
    int n = m.n;
    std::vector<int> label(size_t(n) * n, -1);
    count = 0;
    std::deque<std::pair<int, int>> q;
    for (int y0 = 0; y0 < n; ++y0) {
        for (int x0 = 0; x0 < n; ++x0) {
            if ((m.at(x0, y0) != 0) != foreground) continue;
            if (label[size_t(y0) * n + x0] >= 0) continue;
            int id = count++;
            label[size_t(y0) * n + x0] = id;
            q.push_back({x0, y0});
            while (!q.empty()) {
                auto [x, y] = q.front();
                q.pop_front();
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        if (!eight && dx != 0 && dy != 0) continue;
                        int nx = x + dx, ny = y + dy;
                        if (nx < 0 || ny < 0 || nx >= n || ny >= n) continue;
                        if ((m.at(nx, ny) != 0) != foreground) continue;
                        size_t idx = size_t(ny) * n + nx;
                        if (label[idx] >= 0) continue;
                        label[idx] = id;
                        q.push_back({nx, ny});
                    }
                }
            }
        }
    }
    return label;
}

struct Bbox {
    int x0, y0, x1, y1;  // inclusive
    bool empty = true;
    void add(int x, int y) {
        if (empty) {
            x0 = x1 = x;
            y0 = y1 = y;
            empty = false;
        } else {
            x0 = std::min(x0, x);
            x1 = std::max(x1, x);
            y0 = std::min(y0, y);
            y1 = std::max(y1, y);
        }
    }
};

Bbox mask_bbox(const BinaryGrid2& m) {
    Bbox b;
    for (int y = 0; y < m.n; ++y)
        for (int x = 0; x < m.n; ++x)
            if (m.at(x, y)) b.add(x, y);
    return b;
}

// World-space bounds of a loop set, sampling arcs densely.
void loops_bounds(const std::vector<sketch::Loop>& loops, double& x0, double& y0, double& x1,
                  double& y1) {
    x0 = y0 = std::numeric_limits<double>::max();
    x1 = y1 = std::numeric_limits<double>::lowest();
    auto add = [&](sketch::Vec2 p) {
        x0 = std::min(x0, p.x);
        y0 = std::min(y0, p.y);
        x1 = std::max(x1, p.x);
        y1 = std::max(y1, p.y);
    };
    for (const auto& loop : loops) {
        for (const auto& c : loop) {
            if (std::holds_alternative<sketch::Line>(c)) {
                add(std::get<sketch::Line>(c).a);
                add(std::get<sketch::Line>(c).b);
            } else {
                const auto& a = std::get<sketch::Arc>(c);
                for (int k = 0; k <= 64; ++k) {
                    double ang = a.start_angle + (a.end_angle - a.start_angle) * k / 64.0;
                    add({a.center.x + a.radius * std::cos(ang),
                         a.center.y + a.radius * std::sin(ang)});
                }
            }
        }
    }
}

double iou_masks(const BinaryGrid2& a, const BinaryGrid2& b) { return iou(a, b); }

struct Simplex {
    std::vector<std::vector<double>> pts;
    std::vector<double> f;
};

}  // namespace

std::pair<std::vector<double>, double> nelder_mead(
    const std::function<double(const std::vector<double>&)>& fn, const std::vector<double>& x0,
    const std::vector<double>& step, int max_iter, int& used) {
    size_t n = x0.size();
    Simplex s;
    s.pts.push_back(x0);
    for (size_t i = 0; i < n; ++i) {
        auto p = x0;
        p[i] += step[i];
        s.pts.push_back(p);
    }
    for (auto& p : s.pts) s.f.push_back(fn(p));
    std::vector<double> best_x = s.pts[0];
    double best_f = s.f[0];
    auto note = [&](const std::vector<double>& x, double fx) {
        if (fx < best_f) {
            best_f = fx;
            best_x = x;
        }
    };
    for (size_t i = 0; i < s.pts.size(); ++i) note(s.pts[i], s.f[i]);
    int it = 0;
    for (; it < max_iter; ++it) {
        // order ascending by f
        std::vector<size_t> ord(s.pts.size());
        for (size_t i = 0; i < ord.size(); ++i) ord[i] = i;
        std::sort(ord.begin(), ord.end(), [&](size_t a, size_t b) { return s.f[a] < s.f[b]; });
        size_t lo = ord[0], hi = ord[n], second_hi = ord[n - 1];
        if (std::abs(s.f[hi] - s.f[lo]) < 1e-12) break;
        std::vector<double> centroid(n, 0.0);
        for (size_t i = 0; i <= n; ++i) {
            if (i == hi) continue;
            for (size_t d = 0; d < n; ++d) centroid[d] += s.pts[i][d] / double(n);
        }
        auto blend = [&](double coef) {
            std::vector<double> p(n);
            for (size_t d = 0; d < n; ++d) p[d] = centroid[d] + coef * (centroid[d] - s.pts[hi][d]);
            return p;
        };
        auto refl = blend(1.0);
        double fr = fn(refl);
        note(refl, fr);
        if (fr < s.f[lo]) {
            auto exp_p = blend(2.0);
            double fe = fn(exp_p);
            note(exp_p, fe);
            if (fe < fr) {
                s.pts[hi] = exp_p;
                s.f[hi] = fe;
            } else {
                s.pts[hi] = refl;
                s.f[hi] = fr;
            }
        } else if (fr < s.f[second_hi]) {
            s.pts[hi] = refl;
            s.f[hi] = fr;
        } else {
            auto con = blend(fr < s.f[hi] ? 0.5 : -0.5);
            double fc = fn(con);
            note(con, fc);
            if (fc < std::min(fr, s.f[hi])) {
                s.pts[hi] = con;
                s.f[hi] = fc;
            } else {
                // shrink toward the best vertex
                for (size_t i = 0; i <= n; ++i) {
                    if (i == lo) continue;
                    for (size_t d = 0; d < n; ++d)
                        s.pts[i][d] = s.pts[lo][d] + 0.5 * (s.pts[i][d] - s.pts[lo][d]);
                    s.f[i] = fn(s.pts[i]);
                    note(s.pts[i], s.f[i]);
                }
            }
        }
    }
    used = it;
    return {best_x, best_f};
}

std::vector<LoopComponent> extract_loops(const BinaryGrid2& mask) {
    int n = mask.n;
    int ncomp = 0;
    std::vector<int> lab = label_components(mask, true, true, ncomp);
    std::vector<LoopComponent> out;
    for (int c = 0; c < ncomp; ++c) {
        BinaryGrid2 comp(n);
        for (size_t i = 0; i < lab.size(); ++i) comp.v[i] = (lab[i] == c) ? 1 : 0;
        // Fill holes: background (4-connected) unreachable from the border.
        std::vector<uint8_t> outside(size_t(n) * n, 0);
        std::deque<std::pair<int, int>> q;
        for (int i = 0; i < n; ++i) {
            for (auto [x, y] : {std::pair{i, 0}, {i, n - 1}, {0, i}, {n - 1, i}}) {
                size_t idx = size_t(y) * n + x;
                if (!comp.v[idx] && !outside[idx]) {
                    outside[idx] = 1;
                    q.push_back({x, y});
                }
            }
        }
        while (!q.empty()) {
            auto [x, y] = q.front();
            q.pop_front();
            const int dx[4] = {1, -1, 0, 0}, dy[4] = {0, 0, 1, -1};
            for (int k = 0; k < 4; ++k) {
                int nx = x + dx[k], ny = y + dy[k];
                if (nx < 0 || ny < 0 || nx >= n || ny >= n) continue;
                size_t idx = size_t(ny) * n + nx;
                if (comp.v[idx] || outside[idx]) continue;
                outside[idx] = 1;
                q.push_back({nx, ny});
            }
        }
        BinaryGrid2 holes(n);
        bool any_hole = false;
        for (size_t i = 0; i < holes.v.size(); ++i) {
            holes.v[i] = (!comp.v[i] && !outside[i]) ? 1 : 0;
            if (holes.v[i]) any_hole = true;
        }
        LoopComponent lc;
        lc.outer = comp;
        if (any_hole) {
            int nh = 0;
            std::vector<int> hlab = label_components(holes, true, false, nh);
            for (int h = 0; h < nh; ++h) {
                BinaryGrid2 hm(n);
                for (size_t i = 0; i < hlab.size(); ++i) hm.v[i] = (hlab[i] == h) ? 1 : 0;
                lc.inners.push_back(hm);
            }
        }
        out.push_back(std::move(lc));
    }
    return out;
}

CropResult crop_square(const BinaryGrid2& mask) {
    Bbox b = mask_bbox(mask);
    if (b.empty) throw std::invalid_argument("empty mask");
    int n = mask.n;
    double cx = 0.5 * (b.x0 + b.x1 + 1);
    double cy = 0.5 * (b.y0 + b.y1 + 1);
    double side = std::max(b.x1 - b.x0 + 1, b.y1 - b.y0 + 1);
    side *= 1.2;                       // 10% margin on each side
    side = std::max(side, 8.0);        // minimal window for tiny masks
    double x0 = cx - side / 2, y0 = cy - side / 2;
    CropResult r;
    r.mask = BinaryGrid2(nets::kProfileRes);
    int res = nets::kProfileRes;
    for (int y = 0; y < res; ++y) {
        for (int x = 0; x < res; ++x) {
            double sx = x0 + (x + 0.5) / res * side;
            double sy = y0 + (y + 0.5) / res * side;
            int ix = int(std::floor(sx)), iy = int(std::floor(sy));
            uint8_t v = 0;
            if (ix >= 0 && iy >= 0 && ix < n && iy < n) v = mask.at(ix, iy);
            r.mask.at(x, y) = v;
        }
    }
    r.sdf = sdf_from_binary(r.mask);
    r.transform = {x0 / n, y0 / n, side / n};
    return r;
}

ProfileEncoder::ProfileEncoder(const std::map<std::string, ad::Tensor>& weights, double scale) {
    std::mt19937_64 rng(0);
    input_ = graph_.input({1, nets::kProfileRes, nets::kProfileRes}, "img");
    output_ = nets::build_encoder2d(graph_, input_, scale, rng);
    graph_.load_params(weights);
    weights_ = weights;
}

std::vector<double> ProfileEncoder::embed_raw(const std::vector<double>& img128) const {
    ad::Tensor t({1, nets::kProfileRes, nets::kProfileRes});
    if (img128.size() != t.count()) throw std::invalid_argument("bad encoder input size");
    t.v = img128;
    ad::Context ctx;
    ad::evaluate(graph_, {{input_, t}}, ctx);
    return ctx.val[size_t(output_)].v;
}

std::vector<double> ProfileEncoder::embed(const SdfGrid2& img) const {
    std::vector<double> v(img.v.begin(), img.v.end());
    return embed_raw(v);
}

std::pair<int, double> nearest(const EmbeddingIndex& index, const std::vector<double>& query) {
    if (index.size() == 0) throw std::invalid_argument("empty index");
    int best = -1;
    double best_d = std::numeric_limits<double>::max();
    for (size_t i = 0; i < index.size(); ++i) {
        double d2 = 0;
        for (size_t k = 0; k < query.size(); ++k) {
            double d = query[k] - index.embeddings[i][k];
            d2 += d * d;
        }
        double d = std::sqrt(d2);
        if (d < best_d - 1e-15) {
            best_d = d;
            best = int(i);
        }
    }
    return {best, best_d};
}

void save_index(const EmbeddingIndex& index, const std::string& blob_path,
                const std::string& manifest_path) {
    std::ofstream f(blob_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + blob_path);
    f.write("PIDX", 4);
    uint32_t count = uint32_t(index.size());
    f.write(reinterpret_cast<const char*>(&count), 4);
    for (const auto& e : index.embeddings) {
        if (e.size() != size_t(nets::kEmbed2d)) throw std::invalid_argument("bad embedding size");
        for (double d : e) {
            float x = float(d);
            f.write(reinterpret_cast<const char*>(&x), 4);
        }
    }
    nlohmann::json j;
    j["ids"] = index.ids;
    j["checkpoint_checksum"] = index.checkpoint_checksum;
    j["dim"] = nets::kEmbed2d;
    std::ofstream m(manifest_path);
    m << j.dump(2) << "\n";
}

EmbeddingIndex load_index(const std::string& blob_path, const std::string& manifest_path) {
    std::ifstream f(blob_path, std::ios::binary);
    if (!f) throw std::runtime_error("cannot read " + blob_path);
    char magic[4];
    f.read(magic, 4);
    if (std::memcmp(magic, "PIDX", 4) != 0) throw std::runtime_error("bad index magic");
    uint32_t count = 0;
    f.read(reinterpret_cast<char*>(&count), 4);
    EmbeddingIndex idx;
    for (uint32_t i = 0; i < count; ++i) {
        std::vector<double> e(nets::kEmbed2d);
        for (int k = 0; k < nets::kEmbed2d; ++k) {
            float x;
            f.read(reinterpret_cast<char*>(&x), 4);
            e[k] = x;
        }
        idx.embeddings.push_back(std::move(e));
    }
    if (!f) throw std::runtime_error("truncated index blob");
    std::ifstream m(manifest_path);
    if (!m) throw std::runtime_error("cannot read " + manifest_path);
    nlohmann::json j = nlohmann::json::parse(m);
    idx.ids = j.at("ids").get<std::vector<std::string>>();
    idx.checkpoint_checksum = j.value("checkpoint_checksum", "");
    if (idx.ids.size() != idx.embeddings.size()) throw std::runtime_error("index id/blob mismatch");
    return idx;
}

std::vector<sketch::Loop> FitResult::loops() const {
    const auto& t = sketch::template_by_name(template_name);
    auto r = sketch::instantiate(t, params);
    std::vector<sketch::Loop> out;
    for (const auto& l : r.loops) out.push_back(sketch::transform_loop(l, scale, tx, ty));
    return out;
}

FitResult fit_parameters(const sketch::SketchTemplate& tmpl, const std::vector<double>& init_params,
                         double init_tx, double init_ty, double init_scale,
                         const BinaryGrid2& target, int max_iterations) {
    if (!sketch::instantiate(tmpl, init_params).ok())
        throw std::invalid_argument("invalid seed variation");
    size_t np = tmpl.params.size();
    auto objective = [&](const std::vector<double>& x) {
        std::vector<double> p(x.begin(), x.begin() + np);
        double tx = x[np], ty = x[np + 1], sc = x[np + 2];
        if (sc <= 1e-6) return 0.0;  // invalid: IoU 0
        auto inst = sketch::instantiate(tmpl, p);
        if (!inst.ok()) return 0.0;
        std::vector<sketch::Loop> placed;
        for (const auto& l : inst.loops) placed.push_back(sketch::transform_loop(l, sc, tx, ty));
        return -iou_masks(sketch::rasterize(placed, target.n), target);
    };
    std::vector<double> x0(init_params);
    x0.push_back(init_tx);
    x0.push_back(init_ty);
    x0.push_back(init_scale);
    std::vector<double> step;
    for (const auto& ps : tmpl.params) step.push_back(0.05 * (ps.max_value - ps.min_value));
    step.insert(step.end(), {0.05, 0.05, 0.05});
    int it1 = 0, it2 = 0;
    auto [x1, f1] = nelder_mead(objective, x0, step, max_iterations, it1);
    // one cheap polish restart with a 1%-range simplex
    std::vector<double> step2;
    for (double s : step) step2.push_back(s * 0.2);
    auto [x2, f2] = nelder_mead(objective, x1, step2, max_iterations, it2);
    const auto& xb = f2 < f1 ? x2 : x1;
    double fb = std::min(f1, f2);
    // never worse than the initialization
    double f0 = objective(x0);
    FitResult r;
    const auto& xf = fb <= f0 ? xb : x0;
    r.template_name = tmpl.name;
    r.params.assign(xf.begin(), xf.begin() + np);
    r.tx = xf[np];
    r.ty = xf[np + 1];
    r.scale = xf[np + 2];
    r.iou = -std::min(fb, f0);
    r.iterations = it1 + it2;
    return r;
}

std::vector<double> embed_normalized(const ProfileEncoder& encoder, const BinaryGrid2& mask) {
    return encoder.embed(crop_square(mask).sdf);
}

FitResult retrieve_and_fit(const EmbeddingIndex& index,
                           const std::vector<sketch::SketchVariation>& variations,
                           const ProfileEncoder& encoder, const BinaryGrid2& component,
                           bool use_sdf) {
    CropResult crop = crop_square(component);
    std::vector<double> q;
    if (use_sdf) {
        q = encoder.embed(crop.sdf);
    } else {
        std::vector<double> img(crop.mask.v.begin(), crop.mask.v.end());
        q = encoder.embed_raw(img);
    }
    // Fit the top-k nearest variations and keep the best IoU; a near-tie in
    // embedding space is often a different template that fits better.
    constexpr int kCandidates = 3;
    std::vector<std::pair<double, int>> order;
    for (size_t i = 0; i < index.size(); ++i) {
        double d2 = 0;
        for (size_t k = 0; k < q.size(); ++k) {
            double d = q[k] - index.embeddings[i][k];
            d2 += d * d;
        }
        order.push_back({d2, int(i)});
    }
    std::sort(order.begin(), order.end());
    if (int(order.size()) > kCandidates) order.resize(kCandidates);

    FitResult best_fit;
    best_fit.iou = -1;
    for (const auto& [d2, vid] : order) {
        const sketch::SketchVariation& var = variations[size_t(vid)];
        const auto& tmpl = sketch::template_by_name(var.template_name);
        // Initial placement: align the variation's bounds to the component's
        // bounds in the target frame.
        double lx0, ly0, lx1, ly1;
        loops_bounds(var.loops, lx0, ly0, lx1, ly1);
        Bbox b = mask_bbox(component);
        int n = component.n;
        double wx0 = double(b.x0) / n, wx1 = double(b.x1 + 1) / n;
        double wy0 = double(b.y0) / n, wy1 = double(b.y1 + 1) / n;
        double lspan = std::max(lx1 - lx0, ly1 - ly0);
        double wspan = std::max(wx1 - wx0, wy1 - wy0);
        double sc = lspan > 1e-9 ? wspan / lspan : 1.0;
        double tx = 0.5 * (wx0 + wx1) - sc * 0.5 * (lx0 + lx1);
        double ty = 0.5 * (wy0 + wy1) - sc * 0.5 * (ly0 + ly1);
        FitResult r = fit_parameters(tmpl, var.params, tx, ty, sc, component);
        r.variation_id = index.ids[size_t(vid)];
        if (r.iou > best_fit.iou) best_fit = std::move(r);
    }
    return best_fit;
}

std::vector<FitResult> interpolate(
    const std::vector<double>& z_start, const std::vector<double>& z_end,
    const std::vector<double>& ts, const EmbeddingIndex& index,
    const std::vector<sketch::SketchVariation>& variations,
    const std::function<BinaryGrid2(const std::vector<double>&)>& decode_mask) {
    std::vector<FitResult> out;
    const FitResult* prev = nullptr;
    for (double t : ts) {
        std::vector<double> z(z_start.size());
        for (size_t k = 0; k < z.size(); ++k) z[k] = (1 - t) * z_start[k] + t * z_end[k];
        auto [vid, dist] = nearest(index, z);
        const sketch::SketchVariation& var = variations[size_t(vid)];
        const auto& tmpl = sketch::template_by_name(var.template_name);
        BinaryGrid2 target = decode_mask(z);
        std::vector<double> p0 = var.params;
        double tx = 0, ty = 0, sc = 1;
        if (prev && prev->template_name == var.template_name) {
            p0 = prev->params;  // warm start along the sweep
            tx = prev->tx;
            ty = prev->ty;
            sc = prev->scale;
        }
        FitResult r = fit_parameters(tmpl, p0, tx, ty, sc, target);
        r.variation_id = index.ids[size_t(vid)];
        out.push_back(r);
        prev = &out.back();
    }
    return out;
}

}  // namespace prism::retrieval
