#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "prism/checkpoint.hpp"
#include "prism/fast_marching.hpp"
#include "prism/marching_cubes.hpp"
#include "prism/nets.hpp"
#include "prism/pipeline.hpp"
#include "prism/recipes.hpp"
#include "prism/retrieval.hpp"
#include "prism/rotation24.hpp"
#include "prism/sketch.hpp"
#include "prism/trainkit.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace prism;

namespace {

int g_threads = 1;   // accepted for interface stability; all work is serial
bool g_pretty = false;

void emit(const json& j, const std::string& out_path) {
    std::string text = j.dump(g_pretty ? 2 : -1) + "\n";
    if (out_path.empty()) {
        std::cout << text;
    } else {
        std::ofstream f(out_path);
        f << text;
    }
}

struct Corpus {
    std::vector<sketch::SketchVariation> variations;
    std::vector<std::string> ids;
};

std::string variation_id(const std::string& tmpl, size_t k) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%04zu", tmpl.c_str(), k);
    return buf;
}

void save_corpus(const Corpus& c, const std::string& dir, bool svg) {
    fs::create_directories(dir);
    json manifest;
    manifest["variations"] = json::array();
    for (size_t i = 0; i < c.variations.size(); ++i) {
        const auto& v = c.variations[i];
        char hash[32];
        std::snprintf(hash, sizeof hash, "%016llx", static_cast<unsigned long long>(v.hash));
        json entry = {{"id", c.ids[i]},
                      {"template", v.template_name},
                      {"params", v.params},
                      {"hash", hash}};
        if (svg) {
            std::string file = c.ids[i] + ".svg";
            std::ofstream f(dir + "/" + file);
            f << sketch::loops_to_svg(v.loops);
            entry["svg"] = file;
        }
        manifest["variations"].push_back(entry);
    }
    std::ofstream f(dir + "/manifest.json");
    f << manifest.dump(2) << "\n";
}

Corpus load_corpus(const std::string& dir) {
    std::ifstream f(dir + "/manifest.json");
    if (!f) throw std::runtime_error("corpus manifest missing: " + dir);
    json manifest = json::parse(f);
    Corpus c;
    for (const auto& e : manifest.at("variations")) {
        const auto& t = sketch::template_by_name(e.at("template").get<std::string>());
        auto params = e.at("params").get<std::vector<double>>();
        auto inst = sketch::instantiate(t, params);
        if (!inst.ok()) throw std::runtime_error("invalid corpus entry: " + e.at("id").get<std::string>());
        c.variations.push_back({t.name, params, inst.loops, sketch::wl_hash(inst.loops)});
        c.ids.push_back(e.at("id").get<std::string>());
    }
    return c;
}

Corpus default_corpus(const std::map<std::string, int>& counts, int default_max) {
    Corpus c;
    for (const auto& t : sketch::builtin_templates()) {
        auto it = counts.find(t.name);
        int max_n = it != counts.end() ? it->second : default_max;
        if (max_n <= 0) continue;
        auto vars = sketch::flood_variations(t, t.seed_params(), max_n);
        for (size_t k = 0; k < vars.size(); ++k) {
            c.ids.push_back(variation_id(t.name, k));
            c.variations.push_back(vars[k]);
        }
    }
    return c;
}

std::map<std::string, int> parse_counts(const std::vector<std::string>& specs) {
    std::map<std::string, int> counts;
    for (const auto& s : specs) {
        auto eq = s.find('=');
        if (eq == std::string::npos) throw std::runtime_error("bad --count, expected name=N: " + s);
        counts[s.substr(0, eq)] = std::stoi(s.substr(eq + 1));
    }
    return counts;
}

double ckpt_scale(const std::map<std::string, ad::Tensor>& ckpt, double fallback) {
    auto it = ckpt.find("meta.scale");
    return it != ckpt.end() ? it->second.v[0] : fallback;
}

uint64_t file_checksum(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    std::string data = ss.str();
    return trainkit::fnv1a64(data.data(), data.size());
}

json validity_json(const pipeline::ValidityReport& rep) {
    json out;
    out["valid"] = rep.valid();
    out["checks"] = json::array();
    for (const auto& c : rep.checks)
        out["checks"].push_back({{"name", c.name},
                                 {"pass", c.pass},
                                 {"advisory", c.advisory},
                                 {"step", c.step},
                                 {"loop", c.loop}});
    return out;
}

json fit_json(const retrieval::FitResult& f) {
    return {{"variation", f.variation_id}, {"template", f.template_name},
            {"params", f.params},          {"tx", f.tx},
            {"ty", f.ty},                  {"scale", f.scale},
            {"iou", f.iou},                {"iterations", f.iterations}};
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"prism: recovers editable sketch-and-extrude programs from rounded SDF voxel models"};
    app.require_subcommand(1);
    app.add_option("--threads", g_threads, "worker threads (1 = bit-reproducible)")
        ->default_val(1);
    app.add_flag("--pretty", g_pretty, "indent JSON output");

    // --- gen-corpus ---
    auto* gen_corpus = app.add_subcommand("gen-corpus", "flood sketch template variations");
    std::vector<std::string> gc_templates, gc_counts;
    int gc_max_n = 30;
    std::string gc_out;
    bool gc_svg = false;
    gen_corpus->add_option("--templates", gc_templates, "template names (default: all)");
    gen_corpus->add_option("--max-n", gc_max_n, "variations per template")->default_val(30);
    gen_corpus->add_option("--count", gc_counts, "per-template override, name=N (repeatable)");
    gen_corpus->add_flag("--svg", gc_svg, "also write per-variation SVG files");
    gen_corpus->add_option("--out", gc_out, "output corpus directory")->required();

    // --- gen-data ---
    auto* gen_data = app.add_subcommand("gen-data", "generate synthetic training data");
    uint64_t gd_seed = 0;
    int gd_n = 100;
    std::string gd_out, gd_corpus;
    gen_data->add_option("--seed", gd_seed, "RNG seed")->default_val(0);
    gen_data->add_option("--n", gd_n, "number of base programs (x5 inputs each)")->default_val(100);
    gen_data->add_option("--corpus", gd_corpus, "corpus directory (default: built-in flood)");
    gen_data->add_option("--out", gd_out, "output dataset directory")->required();

    // --- train-2d / train-3d ---
    auto* train2d = app.add_subcommand("train-2d", "train the profile autoencoder");
    auto* train3d = app.add_subcommand("train-3d", "train the voxel-to-program model");
    std::string t2_config, t3_config;
    train2d->add_option("--config", t2_config, "key=value config file")->required();
    train3d->add_option("--config", t3_config, "key=value config file")->required();

    // --- build-index ---
    auto* build_index = app.add_subcommand("build-index", "embed a corpus for retrieval");
    std::string bi_corpus, bi_ckpt, bi_out;
    build_index->add_option("--corpus", bi_corpus, "corpus directory")->required();
    build_index->add_option("--ckpt", bi_ckpt, "2D encoder checkpoint")->required();
    build_index->add_option("--out", bi_out, "index path base (writes .pidx/.json)")->required();

    // --- reconstruct ---
    auto* reconstruct = app.add_subcommand("reconstruct", "recover a program from a voxel SDF");
    std::string rc_input, rc_ckpt, rc_ckpt2d, rc_index, rc_corpus, rc_out, rc_mesh, rc_gt;
    reconstruct->add_option("--input", rc_input, "input .vsdf (64^3)")->required();
    reconstruct->add_option("--ckpt", rc_ckpt, "3D model checkpoint")->required();
    reconstruct->add_option("--ckpt2d", rc_ckpt2d, "2D encoder checkpoint")->required();
    reconstruct->add_option("--index", rc_index, "index path base")->required();
    reconstruct->add_option("--corpus", rc_corpus, "corpus directory")->required();
    reconstruct->add_option("--out", rc_out, "program JSON path");
    reconstruct->add_option("--mesh", rc_mesh, "OBJ export of the voxelized result");
    reconstruct->add_option("--gt", rc_gt, "pre-rounding ground truth .vsdf for IoU");

    // --- fit-profile ---
    auto* fit_profile = app.add_subcommand("fit-profile", "retrieve and fit loops to a 2D mask");
    std::string fp_target, fp_index, fp_corpus, fp_ckpt2d, fp_out;
    bool fp_mask_query = false;
    fit_profile->add_option("--target", fp_target, "target 2D .vsdf")->required();
    fit_profile->add_option("--index", fp_index, "index path base")->required();
    fit_profile->add_option("--corpus", fp_corpus, "corpus directory")->required();
    fit_profile->add_option("--ckpt2d", fp_ckpt2d, "2D encoder checkpoint")->required();
    fit_profile->add_flag("--mask-query", fp_mask_query, "query with binary mask instead of SDF");
    fit_profile->add_option("--out", fp_out, "report path");

    // --- interp ---
    auto* interp = app.add_subcommand("interp", "interpolate between two corpus embeddings");
    std::string ip_start, ip_end, ip_index, ip_corpus, ip_ckpt2d, ip_out;
    int ip_steps = 10;
    interp->add_option("--start", ip_start, "start variation id")->required();
    interp->add_option("--end", ip_end, "end variation id")->required();
    interp->add_option("--steps", ip_steps, "number of steps")->default_val(10);
    interp->add_option("--index", ip_index, "index path base")->required();
    interp->add_option("--corpus", ip_corpus, "corpus directory")->required();
    interp->add_option("--ckpt2d", ip_ckpt2d, "2D autoencoder checkpoint")->required();
    interp->add_option("--out", ip_out, "output directory")->required();

    // --- metrics ---
    auto* metrics = app.add_subcommand("metrics", "score a program against a target");
    std::string mt_program, mt_target, mt_out;
    bool mt_rot24 = false;
    metrics->add_option("--program", mt_program, "program JSON")->required();
    metrics->add_option("--target", mt_target, "target .vsdf")->required();
    metrics->add_flag("--rot24", mt_rot24, "report best IoU over the 24 cube rotations");
    metrics->add_option("--out", mt_out, "report path");

    // --- round ---
    auto* round_cmd = app.add_subcommand("round", "morphological rounding of an SDF");
    std::string rd_input, rd_out;
    double rd_radius = 8.0;
    round_cmd->add_option("--input", rd_input, "input .vsdf")->required();
    round_cmd->add_option("--radius-vox", rd_radius, "ball radius in voxels")->default_val(8.0);
    round_cmd->add_option("--out", rd_out, "output .vsdf")->required();

    // --- oracle-check ---
    auto* oracle = app.add_subcommand("oracle-check", "compositor vs analytic voxelizer");
    uint64_t oc_seed = 0;
    int oc_n = 100, oc_res = 16;
    oracle->add_option("--seed", oc_seed, "RNG seed")->default_val(0);
    oracle->add_option("--n", oc_n, "number of random programs")->default_val(100);
    oracle->add_option("--res", oc_res, "voxel resolution")->default_val(16);

    CLI11_PARSE(app, argc, argv);

    try {
        if (*gen_corpus) {
            auto counts = parse_counts(gc_counts);
            Corpus c;
            if (gc_templates.empty()) {
                c = default_corpus(counts, gc_max_n);
            } else {
                for (const auto& name : gc_templates) {
                    const auto& t = sketch::template_by_name(name);
                    auto it = counts.find(name);
                    int max_n = it != counts.end() ? it->second : gc_max_n;
                    auto vars = sketch::flood_variations(t, t.seed_params(), max_n);
                    for (size_t k = 0; k < vars.size(); ++k) {
                        c.ids.push_back(variation_id(name, k));
                        c.variations.push_back(vars[k]);
                    }
                }
            }
            save_corpus(c, gc_out, gc_svg);
            emit({{"variations", c.ids.size()}, {"dir", gc_out}}, "");
        } else if (*gen_data) {
            Corpus c = gd_corpus.empty() ? default_corpus({}, 25) : load_corpus(gd_corpus);
            auto samples =
                trainkit::gen_samples(gd_seed, gd_n, recipes::builtin_recipes(), c.variations);
            uint64_t checksum = trainkit::save_dataset(samples, gd_out);
            char buf[32];
            std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(checksum));
            emit({{"samples", samples.size()}, {"checksum", buf}, {"dir", gd_out}}, "");
        } else if (*train2d) {
            auto cfg = trainkit::TrainConfig::from_map(trainkit::parse_config(t2_config));
            Corpus c = load_corpus(cfg.dataset_dir);
            auto s = trainkit::train_2d(cfg, c.variations);
            emit({{"epochs", s.epochs_run},
                  {"final_loss", s.final_loss},
                  {"holdout_median_iou", s.holdout_median_iou}},
                 "");
        } else if (*train3d) {
            auto cfg = trainkit::TrainConfig::from_map(trainkit::parse_config(t3_config));
            auto s = trainkit::train_3d(cfg);
            emit({{"epochs", s.epochs_run},
                  {"first_epoch_loss", s.first_epoch_loss},
                  {"final_train_loss", s.final_train.l},
                  {"final_val_loss", s.final_val}},
                 "");
        } else if (*build_index) {
            Corpus c = load_corpus(bi_corpus);
            auto ckpt = ad::load_checkpoint(bi_ckpt);
            retrieval::ProfileEncoder enc(ckpt, ckpt_scale(ckpt, 1.0));
            retrieval::EmbeddingIndex idx;
            char sum[32];
            std::snprintf(sum, sizeof sum, "%016llx",
                          static_cast<unsigned long long>(file_checksum(bi_ckpt)));
            idx.checkpoint_checksum = sum;
            for (size_t i = 0; i < c.variations.size(); ++i) {
                BinaryGrid2 m = sketch::rasterize(c.variations[i].loops, nets::kProfileRes);
                idx.ids.push_back(c.ids[i]);
                idx.embeddings.push_back(retrieval::embed_normalized(enc, m));
            }
            retrieval::save_index(idx, bi_out + ".pidx", bi_out + ".json");
            emit({{"entries", idx.size()}, {"out", bi_out}}, "");
        } else if (*reconstruct) {
            SdfGrid3 input;
            if (!load_vsdf(rc_input, input)) throw std::runtime_error("cannot load " + rc_input);
            auto ckpt3 = ad::load_checkpoint(rc_ckpt);
            auto ckpt2 = ad::load_checkpoint(rc_ckpt2d);
            auto recipe_list = recipes::builtin_recipes();
            pipeline::NetworkDecoder dec(ckpt3, recipe_list, ckpt_scale(ckpt3, 0.25));
            dec.set_input(input);
            retrieval::ProfileEncoder enc(ckpt2, ckpt_scale(ckpt2, 0.25));
            Corpus c = load_corpus(rc_corpus);
            auto idx = retrieval::load_index(rc_index + ".pidx", rc_index + ".json");
            BinaryGrid3 gt;
            bool has_gt = false;
            if (!rc_gt.empty()) {
                SdfGrid3 g;
                if (!load_vsdf(rc_gt, g)) throw std::runtime_error("cannot load " + rc_gt);
                gt = threshold(g);
                has_gt = true;
            }
            auto rep = pipeline::reconstruct(
                input, [&](const recipes::ExtrusionRecipe& r, int oi) { return dec(r, oi); },
                recipe_list, idx, c.variations, enc, has_gt ? &gt : nullptr);
            if (!rep.error.empty()) throw std::runtime_error(rep.error);
            if (!rc_out.empty()) {
                std::ofstream f(rc_out);
                f << pipeline::program_to_json(rep.program) << "\n";
            }
            if (!rc_mesh.empty()) {
                BinaryGrid3 vox = pipeline::voxelize_program(rep.program, input.n);
                SdfGrid3 field = sdf_from_binary(vox);
                save_obj(rc_mesh, marching_cubes(field));
            }
            emit({{"recipe", rep.program.recipe_id},
                  {"iou", rep.iou},
                  {"iou_vs_rounded_input", rep.iou_vs_rounded_input},
                  {"l_vox", rep.l_vox},
                  {"validity", validity_json(rep.validity)},
                  {"program", rc_out}},
                 "");
        } else if (*fit_profile) {
            SdfGrid2 target;
            if (!load_vsdf(fp_target, target)) throw std::runtime_error("cannot load " + fp_target);
            auto ckpt = ad::load_checkpoint(fp_ckpt2d);
            retrieval::ProfileEncoder enc(ckpt, ckpt_scale(ckpt, 0.25));
            Corpus c = load_corpus(fp_corpus);
            auto idx = retrieval::load_index(fp_index + ".pidx", fp_index + ".json");
            BinaryGrid2 mask = threshold(target);
            json loops = json::array();
            for (const auto& comp : retrieval::extract_loops(mask)) {
                auto fit = retrieval::retrieve_and_fit(idx, c.variations, enc, comp.outer,
                                                       !fp_mask_query);
                loops.push_back(fit_json(fit));
                for (const auto& hole : comp.inners)
                    loops.push_back(fit_json(
                        retrieval::retrieve_and_fit(idx, c.variations, enc, hole, !fp_mask_query)));
            }
            emit({{"loops", loops}}, fp_out);
        } else if (*interp) {
            Corpus c = load_corpus(ip_corpus);
            auto idx = retrieval::load_index(ip_index + ".pidx", ip_index + ".json");
            auto find = [&](const std::string& id) -> const std::vector<double>& {
                for (size_t i = 0; i < idx.ids.size(); ++i)
                    if (idx.ids[i] == id) return idx.embeddings[i];
                throw std::runtime_error("id not in index: " + id);
            };
            auto ckpt = ad::load_checkpoint(ip_ckpt2d);
            ad::Graph g;
            std::mt19937_64 rng(0);
            int zin = g.input({nets::kEmbed2d}, "z");
            int logits = nets::build_decoder2d(g, zin, ckpt_scale(ckpt, 0.25), rng);
            g.load_params(ckpt);
            auto decode_mask = [&](const std::vector<double>& z) {
                ad::Context ctx;
                ad::evaluate(g, {{zin, ad::Tensor({nets::kEmbed2d}, z)}}, ctx);
                SdfGrid2 dec(nets::kProfileRes);
                const auto& lv = ctx.val[size_t(logits)].v;
                for (size_t k = 0; k < dec.count(); ++k) dec.v[k] = float(lv[k]);
                return threshold(dec);
            };
            std::vector<double> ts;
            for (int k = 0; k < ip_steps; ++k)
                ts.push_back(ip_steps == 1 ? 0.0 : double(k) / (ip_steps - 1));
            auto fits = retrieval::interpolate(find(ip_start), find(ip_end), ts, idx, c.variations,
                                               decode_mask);
            fs::create_directories(ip_out);
            json out = json::array();
            for (size_t k = 0; k < fits.size(); ++k) {
                std::ofstream f(ip_out + "/step" + std::to_string(k) + ".svg");
                f << sketch::loops_to_svg(fits[k].loops());
                json jf = fit_json(fits[k]);
                jf["t"] = ts[k];
                out.push_back(jf);
            }
            emit({{"steps", out}}, ip_out + "/report.json");
            emit({{"steps", fits.size()}, {"dir", ip_out}}, "");
        } else if (*metrics) {
            std::ifstream pf(mt_program);
            if (!pf) throw std::runtime_error("cannot load " + mt_program);
            std::stringstream ss;
            ss << pf.rdbuf();
            auto prog = pipeline::program_from_json(ss.str());
            SdfGrid3 target;
            if (!load_vsdf(mt_target, target)) throw std::runtime_error("cannot load " + mt_target);
            BinaryGrid3 gt = threshold(target);
            BinaryGrid3 vox = pipeline::voxelize_program(prog, target.n);
            json out = {{"iou", iou(gt, vox)},
                        {"validity", validity_json(pipeline::validate_program(prog))}};
            if (mt_rot24) {
                auto best = iou_best_rotation(gt, vox);
                out["iou_rot24"] = best.ratio;
            }
            emit(out, mt_out);
        } else if (*round_cmd) {
            SdfGrid3 g;
            if (!load_vsdf(rd_input, g)) throw std::runtime_error("cannot load " + rd_input);
            SdfGrid3 rounded = round_offset(g, float(rd_radius / g.n));
            save_vsdf(rd_out, rounded);
            emit({{"out", rd_out}, {"radius_vox", rd_radius}}, "");
        } else if (*oracle) {
            // Random programs, compositor sign field vs analytic voxelization
            // away from surfaces.
            Corpus c = default_corpus({}, 12);
            auto samples = trainkit::gen_samples(oc_seed, oc_n, recipes::builtin_recipes(),
                                                 c.variations);
            int agree = 0, total = 0;
            for (const auto& s : samples) {
                if (s.radius_vox != 0) continue;
                ++total;
                const auto& rec_list = recipes::builtin_recipes();
                const recipes::ExtrusionRecipe* rec = nullptr;
                for (const auto& r : rec_list)
                    if (r.id == s.recipe_id) rec = &r;
                BinaryGrid3 vox = pipeline::voxelize_program(s.program, oc_res);
                std::vector<SdfGrid3> parts;
                for (size_t i = 0; i < s.program.steps.size(); ++i) {
                    std::vector<sketch::Loop> placed;
                    for (const auto& pl : s.program.steps[i].loops)
                        for (const auto& l : pl.loops()) placed.push_back(l);
                    SdfGrid2 prof =
                        trainkit::hard_profile_logits(sketch::rasterize(placed, oc_res));
                    auto [so, eo] = trainkit::envelope_targets(s.program.steps[i].start,
                                                               s.program.steps[i].end, oc_res);
                    recipes::Envelope se = trainkit::hard_envelope_logits(so);
                    recipes::Envelope ee = trainkit::hard_envelope_logits(eo);
                    // same formula as the 64^3 value compositor, at oc_res
                    SdfGrid3 part(oc_res);
                    for (int z = 0; z < oc_res; ++z)
                        for (int y = 0; y < oc_res; ++y)
                            for (int x = 0; x < oc_res; ++x) {
                                using recipes::Axis;
                                Axis ax = s.program.steps[i].axis;
                                int w = ax == Axis::Z ? z : ax == Axis::X ? x : y;
                                float pv = ax == Axis::Z   ? prof.at(x, y)
                                           : ax == Axis::X ? prof.at(z, y)
                                                           : prof.at(x, z);
                                part.at(x, y, z) =
                                    std::max(pv, std::max(se[size_t(w)], ee[size_t(w)]));
                            }
                    parts.push_back(part);
                }
                SdfGrid3 phi = recipes::compose_values(*rec, parts);
                bool all_ok = true;
                for (int z = 0; z < oc_res && all_ok; ++z)
                    for (int y = 0; y < oc_res && all_ok; ++y)
                        for (int x = 0; x < oc_res; ++x) {
                            // skip voxels whose 3^3 neighborhood crosses the surface
                            bool near = false;
                            for (int dz = -1; dz <= 1; ++dz)
                                for (int dy = -1; dy <= 1; ++dy)
                                    for (int dx = -1; dx <= 1; ++dx) {
                                        int nx = x + dx, ny = y + dy, nz = z + dz;
                                        if (nx < 0 || ny < 0 || nz < 0 || nx >= oc_res ||
                                            ny >= oc_res || nz >= oc_res)
                                            continue;
                                        if (vox.at(nx, ny, nz) != vox.at(x, y, z)) near = true;
                                    }
                            if (near) continue;
                            bool inside_phi = phi.at(x, y, z) < 0;
                            if (inside_phi != (vox.at(x, y, z) != 0)) {
                                all_ok = false;
                                break;
                            }
                        }
                if (all_ok) ++agree;
            }
            emit({{"agree", agree}, {"total", total},
                  {"summary", std::to_string(agree) + "/" + std::to_string(total) + " agree"}},
                 "");
            if (agree != total) return 1;
        }
    } catch (const std::exception& e) {
        json err = {{"error", e.what()}};
        std::cerr << err.dump() << "\n";
        return 1;
    }
    return 0;
}
