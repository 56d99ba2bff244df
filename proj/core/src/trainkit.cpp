#include "prism/trainkit.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "prism/checkpoint.hpp"
#include "prism/fast_marching.hpp"
#include "prism/nets.hpp"
#include "prism/retrieval.hpp"

namespace fs = std::filesystem;

namespace prism::trainkit {

const double kRoundingRadiiVox[5] = {0.0, 1.6, 3.7, 5.8, 8.0};

namespace {

// Deterministic uniforms independent of the stdlib's distribution choices.
double unif(std::mt19937_64& rng) { return double(rng() >> 11) * 0x1.0p-53; }
double unif(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unif(rng); }
size_t unif_index(std::mt19937_64& rng, size_t n) { return size_t(rng() % n); }

double bce_term(double x, double t) {
    return std::max(x, 0.0) - x * t + std::log1p(std::exp(-std::abs(x)));
}

template <class Logits, class Targets>
double bce_mean(const Logits& x, const Targets& t) {
    double acc = 0;
    for (size_t i = 0; i < x.size(); ++i) acc += bce_term(double(x[i]), double(t[i]));
    return acc / double(x.size());
}

// Appends a node scaling a scalar [1] node by a constant.
int scale_scalar(ad::Graph& g, int x, double c) {
    int w = g.constant(ad::Tensor({1, 1}, {c}));
    return g.linear(x, w);
}

void loops_bounds(const std::vector<sketch::Loop>& loops, double& x0, double& y0, double& x1,
                  double& y1) {
    x0 = y0 = 1e30;
    x1 = y1 = -1e30;
    auto add = [&](sketch::Vec2 p) {
        x0 = std::min(x0, p.x);
        y0 = std::min(y0, p.y);
        x1 = std::max(x1, p.x);
        y1 = std::max(y1, p.y);
    };
    for (const auto& loop : loops)
        for (const auto& c : loop) {
            if (std::holds_alternative<sketch::Line>(c)) {
                add(std::get<sketch::Line>(c).a);
                add(std::get<sketch::Line>(c).b);
            } else {
                const auto& a = std::get<sketch::Arc>(c);
                for (int k = 0; k <= 32; ++k) {
                    double ang = a.start_angle + (a.end_angle - a.start_angle) * k / 32.0;
                    add({a.center.x + a.radius * std::cos(ang),
                         a.center.y + a.radius * std::sin(ang)});
                }
            }
        }
}

SdfGrid3 binary_to_pm1(const BinaryGrid3& b) {
    SdfGrid3 g(b.n);
    for (size_t i = 0; i < b.v.size(); ++i) g.v[i] = b.v[i] ? -1.f : 1.f;
    return g;
}

SdfGrid2 binary_to_pm1(const BinaryGrid2& b) {
    SdfGrid2 g(b.n);
    for (size_t i = 0; i < b.v.size(); ++i) g.v[i] = b.v[i] ? -1.f : 1.f;
    return g;
}

void shuffle_ids(std::vector<size_t>& idx, std::mt19937_64& rng) {
    for (size_t i = idx.size(); i > 1; --i) std::swap(idx[i - 1], idx[unif_index(rng, i)]);
}

uint64_t hash_file(const std::string& path, uint64_t h) {
    std::ifstream f(path, std::ios::binary);
    char buf[65536];
    while (f) {
        f.read(buf, sizeof buf);
        h = fnv1a64(buf, size_t(f.gcount()), h);
    }
    return h;
}

}  // namespace

uint64_t fnv1a64(const void* data, size_t len, uint64_t h) {
    const unsigned char* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ULL;
    }
    return h;
}

std::pair<std::vector<uint8_t>, std::vector<uint8_t>> envelope_targets(double s, double e, int n) {
    std::vector<uint8_t> so(size_t(n), 0), eo(size_t(n), 0);
    for (int w = 0; w < n; ++w) {
        double c = (w + 0.5) / n;
        so[size_t(w)] = c < s ? 1 : 0;  // start array positive below the plane
        eo[size_t(w)] = c > e ? 1 : 0;  // end array positive above it
    }
    return {so, eo};
}

SdfGrid2 hard_profile_logits(const BinaryGrid2& inside, float magnitude) {
    SdfGrid2 g(inside.n);
    for (size_t i = 0; i < inside.v.size(); ++i) g.v[i] = inside.v[i] ? -magnitude : magnitude;
    return g;
}

recipes::Envelope hard_envelope_logits(const std::vector<uint8_t>& outside, float magnitude) {
    recipes::Envelope e(outside.size());
    for (size_t i = 0; i < outside.size(); ++i) e[i] = outside[i] ? magnitude : -magnitude;
    return e;
}

std::vector<double> renormalized_priors(const std::vector<recipes::ExtrusionRecipe>& rs) {
    double total = 0;
    for (const auto& r : rs) total += r.prior;
    if (total <= 0) throw std::invalid_argument("recipe priors must be positive");
    std::vector<double> p;
    for (const auto& r : rs) p.push_back(r.prior / total);
    return p;
}

std::vector<TrainingSample> gen_samples(uint64_t seed, int n_bases,
                                        const std::vector<recipes::ExtrusionRecipe>& recipe_list,
                                        const std::vector<sketch::SketchVariation>& corpus) {
    if (corpus.empty()) throw std::invalid_argument("empty corpus");
    std::mt19937_64 rng(seed);
    std::vector<double> priors = renormalized_priors(recipe_list);
    std::vector<TrainingSample> out;
    const int res = nets::kVoxelRes;
    const double min_len = 8.0 / res;

    for (int bi = 0; bi < n_bases; ++bi) {
        for (int attempt = 0;; ++attempt) {
            if (attempt >= 200) throw std::runtime_error("data generation failed to converge");
            // recipe by prior
            double u = unif(rng);
            size_t ri = 0;
            double acc = 0;
            for (size_t i = 0; i < priors.size(); ++i) {
                acc += priors[i];
                if (u < acc) {
                    ri = i;
                    break;
                }
            }
            const recipes::ExtrusionRecipe& rec = recipe_list[ri];

            pipeline::CadProgram prog;
            prog.recipe_id = rec.id;
            bool ok = true;
            for (const recipes::Step& rs : rec.steps) {
                pipeline::ProgramStep ps;
                ps.axis = rs.axis;
                ps.boolean = rs.boolean;
                // profile: random corpus variation, scaled and placed inside
                // the unit square with a small margin
                const sketch::SketchVariation& var = corpus[unif_index(rng, corpus.size())];
                double sc = unif(rng, 0.5, 1.0);
                double lx0, ly0, lx1, ly1;
                loops_bounds(var.loops, lx0, ly0, lx1, ly1);
                double txlo = 0.05 - sc * lx0, txhi = 0.95 - sc * lx1;
                double tylo = 0.05 - sc * ly0, tyhi = 0.95 - sc * ly1;
                if (txhi < txlo || tyhi < tylo) {
                    ok = false;
                    break;
                }
                ps.loops.push_back({var.template_name, var.params, unif(rng, txlo, txhi),
                                    unif(rng, tylo, tyhi), sc});
                ps.start = unif(rng, 0.05, 0.7);
                ps.end = ps.start + unif(rng, 2 * min_len, 0.95 - ps.start);
                prog.steps.push_back(std::move(ps));
            }
            if (!ok) continue;
            // shared planes copied from their source step
            for (size_t i = 0; i < rec.steps.size(); ++i) {
                const recipes::Step& rs = rec.steps[i];
                auto resolve = [&](const recipes::PlaneRef& ref) {
                    return ref.plane == recipes::Plane::Start ? prog.steps[size_t(ref.step)].start
                                                              : prog.steps[size_t(ref.step)].end;
                };
                if (!rs.start_ref.own) prog.steps[i].start = resolve(rs.start_ref);
                if (!rs.end_ref.own) prog.steps[i].end = resolve(rs.end_ref);
            }
            for (const auto& ps : prog.steps)
                if (!(ps.start >= 0.02 && ps.end <= 0.98 && ps.end - ps.start >= min_len)) ok = false;
            if (!ok) continue;

            // every step must change the shape visibly, otherwise recipe
            // selection on this sample would be ambiguous
            BinaryGrid3 inside = pipeline::voxelize_program(prog, res);
            bool informative = true;
            size_t total_in = 0;
            for (uint8_t v : inside.v) total_in += v;
            if (total_in < 2000) informative = false;
            for (size_t k = 1; informative && k < prog.steps.size(); ++k) {
                pipeline::CadProgram partial = prog;
                partial.steps.resize(k);
                BinaryGrid3 before = pipeline::voxelize_program(partial, res);
                partial.steps.push_back(prog.steps[k]);
                BinaryGrid3 after = pipeline::voxelize_program(partial, res);
                size_t diff = 0;
                for (size_t i = 0; i < before.v.size(); ++i)
                    if (before.v[i] != after.v[i]) ++diff;
                if (diff < 500) informative = false;
            }
            if (!informative) continue;

            SdfGrid3 base_sdf = sdf_from_binary(inside);
            std::vector<SdfGrid3> inputs;
            try {
                for (double rvox : kRoundingRadiiVox)
                    inputs.push_back(rvox == 0 ? base_sdf
                                               : round_offset(base_sdf, float(rvox / res)));
            } catch (const ShapeEliminatedError&) {
                continue;  // too thin for the largest radius; redraw
            }

            char bid[32];
            std::snprintf(bid, sizeof bid, "b%05d", bi);
            TrainingSample proto;
            proto.base_id = bid;
            proto.recipe_id = rec.id;
            proto.program = prog;
            proto.inside = inside;
            for (const auto& ps : prog.steps) {
                std::vector<sketch::Loop> placed;
                for (const auto& pl : ps.loops)
                    for (const auto& l : pl.loops()) placed.push_back(l);
                proto.profiles_inside.push_back(sketch::rasterize(placed, nets::kProfileRes));
                auto [so, eo] = envelope_targets(ps.start, ps.end, nets::kEnvelopeLen);
                proto.start_outside.push_back(std::move(so));
                proto.end_outside.push_back(std::move(eo));
            }
            for (size_t k = 0; k < 5; ++k) {
                TrainingSample s = proto;
                s.input = inputs[k];
                s.radius_vox = kRoundingRadiiVox[k];
                out.push_back(std::move(s));
            }
            break;
        }
    }
    return out;
}

uint64_t save_dataset(const std::vector<TrainingSample>& samples, const std::string& dir) {
    fs::create_directories(dir);
    nlohmann::json manifest;
    manifest["samples"] = nlohmann::json::array();
    uint64_t checksum = 1469598103934665603ULL;
    std::string last_base;
    for (size_t si = 0; si < samples.size(); ++si) {
        const TrainingSample& s = samples[si];
        int rk = 0;
        for (int k = 0; k < 5; ++k)
            if (kRoundingRadiiVox[k] == s.radius_vox) rk = k;
        std::string id = s.base_id + "_r" + std::to_string(rk);
        std::string stem = dir + "/" + id;
        save_vsdf(stem + "_input.vsdf", s.input);
        checksum = hash_file(stem + "_input.vsdf", checksum);
        if (s.base_id != last_base) {
            std::string bstem = dir + "/" + s.base_id;
            save_vsdf(bstem + "_inside.vsdf", binary_to_pm1(s.inside));
            std::ofstream pf(bstem + "_prog.json");
            pf << pipeline::program_to_json(s.program) << "\n";
            for (size_t i = 0; i < s.profiles_inside.size(); ++i)
                save_vsdf(bstem + "_p" + std::to_string(i) + ".vsdf",
                          binary_to_pm1(s.profiles_inside[i]));
            std::ofstream ef(bstem + "_env.bin", std::ios::binary);
            for (size_t i = 0; i < s.start_outside.size(); ++i) {
                for (uint8_t v : s.start_outside[i]) {
                    float x = float(v);
                    ef.write(reinterpret_cast<const char*>(&x), 4);
                }
                for (uint8_t v : s.end_outside[i]) {
                    float x = float(v);
                    ef.write(reinterpret_cast<const char*>(&x), 4);
                }
            }
            last_base = s.base_id;
        }
        manifest["samples"].push_back(
            {{"id", id}, {"base", s.base_id}, {"recipe", s.recipe_id}, {"radius_vox", s.radius_vox}});
    }
    char buf[32];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(checksum));
    manifest["checksum"] = buf;
    std::ofstream mf(dir + "/manifest.json");
    mf << manifest.dump(2) << "\n";
    return checksum;
}

std::vector<std::string> dataset_sample_ids(const std::string& dir) {
    std::ifstream mf(dir + "/manifest.json");
    if (!mf) throw std::runtime_error("dataset missing: " + dir);
    nlohmann::json manifest = nlohmann::json::parse(mf);
    std::vector<std::string> ids;
    for (const auto& s : manifest.at("samples")) ids.push_back(s.at("id").get<std::string>());
    return ids;
}

TrainingSample load_sample(const std::string& dir, const std::string& id) {
    auto pos = id.rfind("_r");
    if (pos == std::string::npos) throw std::invalid_argument("bad sample id: " + id);
    TrainingSample s;
    s.base_id = id.substr(0, pos);
    int rk = std::stoi(id.substr(pos + 2));
    s.radius_vox = kRoundingRadiiVox[rk];
    std::string stem = dir + "/" + id;
    std::string bstem = dir + "/" + s.base_id;
    if (!load_vsdf(stem + "_input.vsdf", s.input))
        throw std::runtime_error("cannot load " + stem + "_input.vsdf");
    SdfGrid3 inside_pm;
    if (!load_vsdf(bstem + "_inside.vsdf", inside_pm))
        throw std::runtime_error("cannot load " + bstem + "_inside.vsdf");
    s.inside = threshold(inside_pm);
    std::ifstream pf(bstem + "_prog.json");
    std::stringstream ss;
    ss << pf.rdbuf();
    s.program = pipeline::program_from_json(ss.str());
    s.recipe_id = s.program.recipe_id;
    std::ifstream ef(bstem + "_env.bin", std::ios::binary);
    for (size_t i = 0; i < s.program.steps.size(); ++i) {
        SdfGrid2 p;
        if (!load_vsdf(bstem + "_p" + std::to_string(i) + ".vsdf", p))
            throw std::runtime_error("cannot load profile " + std::to_string(i));
        s.profiles_inside.push_back(threshold(p));
        std::vector<uint8_t> so(nets::kEnvelopeLen), eo(nets::kEnvelopeLen);
        for (auto* dst : {&so, &eo})
            for (auto& v : *dst) {
                float x;
                ef.read(reinterpret_cast<char*>(&x), 4);
                v = x > 0.5f ? 1 : 0;
            }
        s.start_outside.push_back(std::move(so));
        s.end_outside.push_back(std::move(eo));
    }
    return s;
}

LossBundle compute_losses(const recipes::ExtrusionRecipe& recipe, const SdfGrid3& phi,
                          const std::vector<SdfGrid2>& profile_logits,
                          const std::vector<recipes::Envelope>& start_logits,
                          const std::vector<recipes::Envelope>& end_logits,
                          const TrainingSample& targets) {
    const size_t n = recipe.steps.size();
    if (profile_logits.size() != n || start_logits.size() != n || end_logits.size() != n ||
        targets.profiles_inside.size() != n)
        throw std::invalid_argument("loss shape mismatch");
    LossBundle b;
    std::vector<uint8_t> t_vox(phi.count());
    for (size_t i = 0; i < phi.count(); ++i) t_vox[i] = targets.inside.v[i] ? 0 : 1;
    b.l_vox = bce_mean(phi.v, t_vox);
    int ns = 0, ne = 0;
    for (size_t i = 0; i < n; ++i) {
        std::vector<uint8_t> t_prof(targets.profiles_inside[i].count());
        for (size_t k = 0; k < t_prof.size(); ++k)
            t_prof[k] = targets.profiles_inside[i].v[k] ? 0 : 1;
        b.l_profile += bce_mean(profile_logits[i].v, t_prof) / double(n);
        if (recipe.steps[i].start_ref.own) {
            b.l_start += bce_mean(start_logits[i], targets.start_outside[i]);
            ++ns;
        }
        if (recipe.steps[i].end_ref.own) {
            b.l_end += bce_mean(end_logits[i], targets.end_outside[i]);
            ++ne;
        }
    }
    if (ns) b.l_start /= ns;
    if (ne) b.l_end /= ne;
    b.l = b.l_vox + b.l_profile + b.l_start + b.l_end;
    return b;
}

TrainGraph3d build_train_graph_3d(const recipes::ExtrusionRecipe& recipe, double scale,
                                  std::mt19937_64& rng) {
    TrainGraph3d tg;
    tg.input = tg.g.input({1, nets::kVoxelRes, nets::kVoxelRes, nets::kVoxelRes}, "vox");
    int z = nets::build_voxel_encoder(tg.g, tg.input, scale, rng);
    tg.out = recipes::decode_model(tg.g, z, recipe, scale, rng);
    const int n = recipe.extrusion_count();
    tg.t_vox = tg.g.input({nets::kVoxelRes, nets::kVoxelRes, nets::kVoxelRes}, "t_vox");
    tg.l_vox = tg.g.bce_with_logits(tg.out.phi, tg.t_vox);
    int prof_sum = -1;
    int start_sum = -1, end_sum = -1;
    int ns = 0, ne = 0;
    for (int i = 0; i < n; ++i) {
        int tp = tg.g.input({nets::kProfileRes, nets::kProfileRes}, "t_prof" + std::to_string(i));
        tg.t_profiles.push_back(tp);
        int lp = tg.g.bce_with_logits(tg.out.profiles[size_t(i)], tp);
        prof_sum = prof_sum < 0 ? lp : tg.g.add(prof_sum, lp);
        if (tg.out.start_decoded[size_t(i)]) {
            int ts = tg.g.input({nets::kEnvelopeLen}, "t_start" + std::to_string(i));
            tg.t_starts.push_back(ts);
            int ls = tg.g.bce_with_logits(tg.out.starts[size_t(i)], ts);
            start_sum = start_sum < 0 ? ls : tg.g.add(start_sum, ls);
            ++ns;
        } else {
            tg.t_starts.push_back(-1);
        }
        if (tg.out.end_decoded[size_t(i)]) {
            int te = tg.g.input({nets::kEnvelopeLen}, "t_end" + std::to_string(i));
            tg.t_ends.push_back(te);
            int le = tg.g.bce_with_logits(tg.out.ends[size_t(i)], te);
            end_sum = end_sum < 0 ? le : tg.g.add(end_sum, le);
            ++ne;
        } else {
            tg.t_ends.push_back(-1);
        }
    }
    tg.l_profile = scale_scalar(tg.g, prof_sum, 1.0 / n);
    tg.l_start = ns ? scale_scalar(tg.g, start_sum, 1.0 / ns)
                    : tg.g.constant(ad::Tensor({1}, {0.0}));
    tg.l_end = ne ? scale_scalar(tg.g, end_sum, 1.0 / ne)
                  : tg.g.constant(ad::Tensor({1}, {0.0}));
    tg.l_total = tg.g.add(tg.g.add(tg.g.add(tg.l_vox, tg.l_profile), tg.l_start), tg.l_end);
    return tg;
}

void feed_targets(const TrainGraph3d& tg, const TrainingSample& s,
                  std::map<int, ad::Tensor>& feeds) {
    feeds[tg.input] = nets::tensor_from_grid(s.input);
    ad::Tensor tv({nets::kVoxelRes, nets::kVoxelRes, nets::kVoxelRes});
    for (size_t i = 0; i < tv.count(); ++i) tv.v[i] = s.inside.v[i] ? 0.0 : 1.0;
    feeds[tg.t_vox] = std::move(tv);
    for (size_t i = 0; i < tg.t_profiles.size(); ++i) {
        ad::Tensor tp({nets::kProfileRes, nets::kProfileRes});
        for (size_t k = 0; k < tp.count(); ++k)
            tp.v[k] = s.profiles_inside[i].v[k] ? 0.0 : 1.0;
        feeds[tg.t_profiles[i]] = std::move(tp);
        if (tg.t_starts[i] >= 0) {
            ad::Tensor ts({nets::kEnvelopeLen});
            for (int k = 0; k < nets::kEnvelopeLen; ++k) ts.v[size_t(k)] = s.start_outside[i][size_t(k)];
            feeds[tg.t_starts[i]] = std::move(ts);
        }
        if (tg.t_ends[i] >= 0) {
            ad::Tensor te({nets::kEnvelopeLen});
            for (int k = 0; k < nets::kEnvelopeLen; ++k) te.v[size_t(k)] = s.end_outside[i][size_t(k)];
            feeds[tg.t_ends[i]] = std::move(te);
        }
    }
}

void Adam::step(std::map<std::string, ad::Tensor>& params,
                const std::map<std::string, ad::Tensor>& grads) {
    ++t;
    double bc1 = 1.0 - std::pow(beta1, double(t));
    double bc2 = 1.0 - std::pow(beta2, double(t));
    for (auto& [name, g] : grads) {
        auto pit = params.find(name);
        if (pit == params.end()) throw std::invalid_argument("unknown parameter: " + name);
        ad::Tensor& p = pit->second;
        ad::Tensor& mm = m.try_emplace(name, ad::Tensor(p.shape)).first->second;
        ad::Tensor& vv = v.try_emplace(name, ad::Tensor(p.shape)).first->second;
        for (size_t i = 0; i < p.count(); ++i) {
            mm.v[i] = beta1 * mm.v[i] + (1 - beta1) * g.v[i];
            vv.v[i] = beta2 * vv.v[i] + (1 - beta2) * g.v[i] * g.v[i];
            p.v[i] -= lr * (mm.v[i] / bc1) / (std::sqrt(vv.v[i] / bc2) + eps);
        }
    }
}

void Adam::save_into(std::map<std::string, ad::Tensor>& ckpt) const {
    for (const auto& [name, tensor] : m) ckpt["adam.m." + name] = tensor;
    for (const auto& [name, tensor] : v) ckpt["adam.v." + name] = tensor;
    ckpt["adam.t"] = ad::Tensor({1}, {double(t)});
}

bool Adam::load_from(const std::map<std::string, ad::Tensor>& ckpt) {
    auto it = ckpt.find("adam.t");
    if (it == ckpt.end()) return false;
    t = long(it->second.v[0]);
    m.clear();
    v.clear();
    for (const auto& [name, tensor] : ckpt) {
        if (name.rfind("adam.m.", 0) == 0) m[name.substr(7)] = tensor;
        if (name.rfind("adam.v.", 0) == 0) v[name.substr(7)] = tensor;
    }
    return true;
}

std::map<std::string, std::string> parse_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw std::runtime_error("cannot read config: " + path);
    std::map<std::string, std::string> kv;
    std::string line;
    while (std::getline(f, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line.erase(hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t a = s.find_first_not_of(" \t\r");
            size_t b = s.find_last_not_of(" \t\r");
            return a == std::string::npos ? std::string() : s.substr(a, b - a + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (!key.empty()) kv[key] = val;
    }
    return kv;
}

TrainConfig TrainConfig::from_map(const std::map<std::string, std::string>& kv) {
    TrainConfig c;
    auto get = [&](const char* k) -> const std::string* {
        auto it = kv.find(k);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (auto* s = get("dataset_dir")) c.dataset_dir = *s;
    if (auto* s = get("out_checkpoint")) c.out_checkpoint = *s;
    if (auto* s = get("curves_csv")) c.curves_csv = *s;
    if (auto* s = get("resume_from")) c.resume_from = *s;
    if (auto* s = get("scale")) c.scale = std::stod(*s);
    if (auto* s = get("lr")) c.lr = std::stod(*s);
    if (auto* s = get("batch")) c.batch = std::stoi(*s);
    if (auto* s = get("epochs")) c.epochs = std::stoi(*s);
    if (auto* s = get("patience")) c.patience = std::stoi(*s);
    if (auto* s = get("seed")) c.seed = std::stoull(*s);
    if (auto* s = get("val_fraction")) c.val_fraction = std::stod(*s);
    return c;
}

TrainSummary train_3d(const TrainConfig& cfg) {
    auto ids = dataset_sample_ids(cfg.dataset_dir);
    if (ids.empty()) throw std::runtime_error("dataset missing or empty");
    size_t n_val = std::max<size_t>(1, size_t(cfg.val_fraction * double(ids.size())));
    std::vector<std::string> val_ids(ids.end() - long(n_val), ids.end());
    std::vector<std::string> train_ids(ids.begin(), ids.end() - long(n_val));

    auto recipe_list = recipes::builtin_recipes();
    std::map<std::string, size_t> recipe_pos;
    std::vector<TrainGraph3d> graphs;
    std::mt19937_64 init_rng(cfg.seed);
    std::map<std::string, ad::Tensor> store;
    for (const auto& rec : recipe_list) {
        recipe_pos[rec.id] = graphs.size();
        graphs.push_back(build_train_graph_3d(rec, cfg.scale, init_rng));
        for (auto& [name, tensor] : graphs.back().g.named_params()) store.try_emplace(name, tensor);
    }
    Adam adam;
    adam.lr = cfg.lr;
    if (!cfg.resume_from.empty()) {
        auto ckpt = ad::load_checkpoint(cfg.resume_from);
        adam.load_from(ckpt);
        for (auto& [name, tensor] : store) {
            auto it = ckpt.find(name);
            if (it != ckpt.end()) tensor = it->second;
        }
    }

    std::ofstream csv;
    if (!cfg.curves_csv.empty()) {
        csv.open(cfg.curves_csv);
        csv << "epoch,l_vox,l_profile,l_start,l_end,l,val_l\n";
    }

    auto eval_sample = [&](const std::string& id, bool train, LossBundle& agg,
                           std::map<std::string, ad::Tensor>* grad_acc) {
        TrainingSample s = load_sample(cfg.dataset_dir, id);
        TrainGraph3d& tg = graphs[recipe_pos.at(s.recipe_id)];
        tg.g.load_params(store);
        std::map<int, ad::Tensor> feeds;
        feed_targets(tg, s, feeds);
        ad::Context ctx;
        ad::evaluate(tg.g, feeds, ctx);
        agg.l_vox += ctx.val[size_t(tg.l_vox)].v[0];
        agg.l_profile += ctx.val[size_t(tg.l_profile)].v[0];
        agg.l_start += ctx.val[size_t(tg.l_start)].v[0];
        agg.l_end += ctx.val[size_t(tg.l_end)].v[0];
        agg.l += ctx.val[size_t(tg.l_total)].v[0];
        if (train && grad_acc) {
            ad::backward(tg.g, tg.l_total, ctx);
            for (int pid : tg.g.param_ids()) {
                const std::string& name = tg.g.node(pid).name;
                auto [it, fresh] =
                    grad_acc->try_emplace(name, ad::Tensor(tg.g.node(pid).shape));
                auto& acc = it->second;
                const auto& gt = ctx.grad[size_t(pid)];
                for (size_t i = 0; i < acc.count(); ++i) acc.v[i] += gt.v[i];
            }
        }
    };

    TrainSummary summary;
    double best_val = 1e30;
    int since_best = 0;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 erng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * uint64_t(epoch + 1)));
        std::vector<size_t> order(train_ids.size());
        std::iota(order.begin(), order.end(), 0);
        shuffle_ids(order, erng);

        LossBundle train_agg;
        size_t done = 0;
        while (done < order.size()) {
            size_t bsz = std::min<size_t>(size_t(cfg.batch), order.size() - done);
            std::map<std::string, ad::Tensor> grad_acc;
            for (size_t k = 0; k < bsz; ++k)
                eval_sample(train_ids[order[done + k]], true, train_agg, &grad_acc);
            for (auto& [name, g] : grad_acc)
                for (auto& x : g.v) x /= double(bsz);
            adam.step(store, grad_acc);
            done += bsz;
        }
        double nt = double(train_ids.size());
        train_agg.l_vox /= nt;
        train_agg.l_profile /= nt;
        train_agg.l_start /= nt;
        train_agg.l_end /= nt;
        train_agg.l /= nt;
        if (epoch == 0) summary.first_epoch_loss = train_agg.l;

        LossBundle val_agg;
        for (const auto& id : val_ids) eval_sample(id, false, val_agg, nullptr);
        double val_l = val_agg.l / double(val_ids.size());

        if (csv.is_open())
            csv << epoch << "," << train_agg.l_vox << "," << train_agg.l_profile << ","
                << train_agg.l_start << "," << train_agg.l_end << "," << train_agg.l << ","
                << val_l << "\n";
        summary.epochs_run = epoch + 1;
        summary.final_train = train_agg;
        summary.final_val = val_l;
        if (val_l < best_val - 1e-9) {
            best_val = val_l;
            since_best = 0;
        } else if (++since_best >= cfg.patience) {
            break;
        }
    }

    if (!cfg.out_checkpoint.empty()) {
        std::map<std::string, ad::Tensor> ckpt = store;
        adam.save_into(ckpt);
        ckpt["meta.scale"] = ad::Tensor({1}, {cfg.scale});
        ad::save_checkpoint(cfg.out_checkpoint, ckpt);
    }
    return summary;
}

Train2dSummary train_2d(const TrainConfig& cfg,
                        const std::vector<sketch::SketchVariation>& corpus) {
    if (corpus.empty()) throw std::runtime_error("corpus missing");
    // Precompute SDF inputs and binary targets.
    std::vector<SdfGrid2> inputs;
    std::vector<BinaryGrid2> masks;
    for (const auto& var : corpus) {
        // Crop-normalized, matching the frame retrieval queries live in.
        auto crop = retrieval::crop_square(sketch::rasterize(var.loops, nets::kProfileRes));
        inputs.push_back(std::move(crop.sdf));
        masks.push_back(std::move(crop.mask));
    }
    size_t n_hold = std::max<size_t>(1, size_t(cfg.val_fraction * double(corpus.size())));
    size_t n_train = corpus.size() - n_hold;

    ad::Graph g;
    std::mt19937_64 rng(cfg.seed);
    int input = g.input({1, nets::kProfileRes, nets::kProfileRes}, "img");
    int z = nets::build_encoder2d(g, input, cfg.scale, rng);
    int logits = nets::build_decoder2d(g, z, cfg.scale, rng);
    int target = g.input({nets::kProfileRes, nets::kProfileRes}, "t");
    int loss = g.bce_with_logits(logits, target);

    std::map<std::string, ad::Tensor> store = g.named_params();
    if (!cfg.resume_from.empty()) {
        auto ckpt = ad::load_checkpoint(cfg.resume_from);
        for (auto& [name, tensor] : store) {
            auto it = ckpt.find(name);
            if (it != ckpt.end()) tensor = it->second;
        }
    }
    Adam adam;
    adam.lr = cfg.lr;

    auto make_feeds = [&](size_t i, std::map<int, ad::Tensor>& feeds) {
        feeds[input] = nets::tensor_from_grid(inputs[i]);
        ad::Tensor t({nets::kProfileRes, nets::kProfileRes});
        for (size_t k = 0; k < t.count(); ++k) t.v[k] = masks[i].v[k] ? 0.0 : 1.0;
        feeds[target] = std::move(t);
    };

    Train2dSummary summary;
    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        std::mt19937_64 erng(cfg.seed ^ (0x9e3779b97f4a7c15ULL * uint64_t(epoch + 1)));
        std::vector<size_t> order(n_train);
        std::iota(order.begin(), order.end(), 0);
        shuffle_ids(order, erng);
        double epoch_loss = 0;
        size_t done = 0;
        while (done < order.size()) {
            size_t bsz = std::min<size_t>(size_t(cfg.batch), order.size() - done);
            std::map<std::string, ad::Tensor> grad_acc;
            for (size_t k = 0; k < bsz; ++k) {
                g.load_params(store);
                std::map<int, ad::Tensor> feeds;
                make_feeds(order[done + k], feeds);
                ad::Context ctx;
                ad::evaluate(g, feeds, ctx);
                epoch_loss += ctx.val[size_t(loss)].v[0];
                ad::backward(g, loss, ctx);
                for (int pid : g.param_ids()) {
                    const std::string& name = g.node(pid).name;
                    auto [it, fresh] = grad_acc.try_emplace(name, ad::Tensor(g.node(pid).shape));
                    const auto& gt = ctx.grad[size_t(pid)];
                    for (size_t i = 0; i < it->second.count(); ++i) it->second.v[i] += gt.v[i];
                }
            }
            for (auto& [name, gr] : grad_acc)
                for (auto& x : gr.v) x /= double(bsz);
            adam.step(store, grad_acc);
            done += bsz;
        }
        summary.epochs_run = epoch + 1;
        summary.final_loss = epoch_loss / double(n_train);
    }

    // Held-out reconstruction IoU (median).
    g.load_params(store);
    std::vector<double> ious;
    for (size_t i = n_train; i < corpus.size(); ++i) {
        std::map<int, ad::Tensor> feeds;
        make_feeds(i, feeds);
        ad::Context ctx;
        ad::evaluate(g, feeds, ctx);
        SdfGrid2 dec(nets::kProfileRes);
        const auto& lv = ctx.val[size_t(logits)].v;
        for (size_t k = 0; k < dec.count(); ++k) dec.v[k] = float(lv[k]);
        ious.push_back(iou(threshold(dec), masks[i]));
    }
    std::sort(ious.begin(), ious.end());
    summary.holdout_median_iou = ious.empty() ? 0 : ious[ious.size() / 2];

    if (!cfg.out_checkpoint.empty()) {
        std::map<std::string, ad::Tensor> ckpt = store;
        adam.save_into(ckpt);
        ckpt["meta.scale"] = ad::Tensor({1}, {cfg.scale});
        ad::save_checkpoint(cfg.out_checkpoint, ckpt);
    }
    return summary;
}

}  // namespace prism::trainkit
