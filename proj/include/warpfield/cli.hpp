#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "checkpoint.hpp"
#include "config.hpp"
#include "dataset.hpp"
#include "metrics.hpp"
#include "render.hpp"
#include "synthetic.hpp"
#include "train.hpp"

namespace warpfield {
namespace detail {

inline std::string hyphenate(std::string key) {
    for (char& c : key)
        if (c == '_') c = '-';
    return key;
}

// Every run owns its output directory; refuse to reuse a non-empty one
// unless asked.
inline void claim_output_dir(const std::string& dir, bool overwrite) {
    namespace fs = std::filesystem;
    if (dir.empty()) throw UsageError("an output directory is required (--out)");
    fs::path p(dir);
    if (fs::exists(p)) {
        if (!fs::is_directory(p)) throw UsageError("output path is not a directory: " + dir);
        if (fs::directory_iterator(p) != fs::directory_iterator() && !overwrite)
            throw UsageError("output directory " + dir +
                             " is not empty; pass --overwrite to reuse it");
    } else {
        std::error_code ec;
        fs::create_directories(p, ec);
        if (ec) throw DataError("cannot create output directory " + dir + ": " + ec.message());
    }
}

inline RenderModality parse_modality(const std::string& s) {
    if (s == "color") return RenderModality::color;
    if (s == "rigidity") return RenderModality::rigidity;
    if (s == "correspondence") return RenderModality::correspondence;
    if (s == "canonical") return RenderModality::canonical;
    throw UsageError("modality must be color, rigidity, correspondence, or canonical");
}

inline std::string modality_name(RenderModality m) {
    switch (m) {
    case RenderModality::color: return "color";
    case RenderModality::rigidity: return "rigidity";
    case RenderModality::correspondence: return "correspondence";
    case RenderModality::canonical: return "canonical";
    }
    return "color";
}

inline std::string numbered_png(const std::string& prefix, int i) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%s_%05d.png", prefix.c_str(), i);
    return buf;
}

inline Tensor latent_row_of(const SceneModel& m, int time_id) {
    if (time_id < 0 || time_id >= m.latents.rows())
        throw DataError("latent index " + std::to_string(time_id) +
                        " is outside the checkpoint's latent table");
    Tensor row(1, m.latents.cols());
    for (int c = 0; c < m.latents.cols(); ++c) row.at(0, c) = m.latents.at(time_id, c);
    return row;
}

// With independent latents every clip image becomes its own time step; novel
// frames are remapped through the first clip image that carried their time.
inline void apply_latent_policy(Dataset& ds, const RunConfig& rc) {
    if (!rc.independent_latents) return;
    std::map<int, int> first_row;
    for (std::size_t i = 0; i < ds.records.size(); ++i) {
        first_row.emplace(ds.records[i].time_id, int(i));
        ds.records[i].time_id = int(i);
    }
    for (auto& n : ds.novel) {
        auto it = first_row.find(n.time_id);
        if (it == first_row.end())
            throw DataError("novel frame time " + std::to_string(n.time_id) +
                            " does not appear in the clip");
        n.time_id = it->second;
    }
}

inline RenderConfig base_render_config(const RunConfig& rc, const Checkpoint& cp) {
    RenderConfig out;
    out.coarse_samples = rc.coarse_samples;
    out.fine_samples = rc.fine_samples;
    out.seed = rc.seed;
    out.bounds = cp.bounds;
    if (out.bounds.valid && rc.bounds_expand > 0) out.bounds.expand_fraction(rc.bounds_expand);
    return out;
}

inline double mean_of(const std::vector<double>& v) {
    double s = 0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / double(v.size());
}

// Config keys staged from CLI flags; applied on top of file values, which sit
// on top of defaults (or the checkpoint snapshot when resuming).
struct StagedConfig {
    std::map<std::string, std::string> values;

    void add_options(CLI::App* sub) {
        RunConfig defaults;
        for (const auto& [key, field] : config_fields()) {
            std::string flag = "--" + hyphenate(key);
            std::string preview = field.get(defaults);
            bool is_bool = preview == "true" || preview == "false";
            std::string k = key;
            if (is_bool) {
                sub->add_flag_callback(
                    flag, [this, k] { values[k] = "true"; }, "set " + k + " (default " + preview + ")");
                sub->add_flag_callback(
                    "--no-" + hyphenate(key), [this, k] { values[k] = "false"; },
                    "clear " + k);
            } else {
                sub->add_option_function<std::string>(
                    flag, [this, k](const std::string& v) { values[k] = v; },
                    k + " (default " + (preview.empty() ? "unset" : preview) + ")")
                    ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
            }
        }
        sub->add_option_function<std::string>(
            "--out", [this](const std::string& v) { values["output"] = v; },
            "output directory (alias for --output)")
            ->multi_option_policy(CLI::MultiOptionPolicy::TakeLast);
    }

    void apply(RunConfig& rc) const {
        for (const auto& [k, v] : values) set_config_key(rc, k, v);
    }
};

inline RunConfig resolve_config(const RunConfig& base, const std::string& config_path,
                                const StagedConfig& staged) {
    RunConfig rc = base;
    if (!config_path.empty()) load_config_file(rc, config_path);
    staged.apply(rc);
    return rc;
}

// ---------------------------------------------------------------------------
// subcommand runners
// ---------------------------------------------------------------------------

struct MakeDatasetArgs {
    std::string out;
    int frames = 24;
    int size = 64;
    int oracle_samples = 512;
    int novel_stride = 4;
    std::uint64_t seed = 1;
    bool overwrite = false;
};

inline int run_make_dataset(const MakeDatasetArgs& a) {
    if (a.frames < 1) throw UsageError("make-dataset: need at least one frame");
    if (a.size < 4) throw UsageError("make-dataset: image size must be at least 4");
    claim_output_dir(a.out, a.overwrite);

    SyntheticSpec spec = toy_scene();
    spec.frames = a.frames;
    spec.width = spec.height = a.size;
    spec.focal = 1.25 * a.size;
    spec.oracle_samples = a.oracle_samples;
    spec.novel_stride = a.novel_stride;
    spec.seed = a.seed;

    Dataset ds = scene_to_dataset(generate_synthetic(spec));
    write_dataset(ds, a.out);
    std::cout << "wrote " << ds.records.size() << " frames (" << ds.train_count() << " train, "
              << ds.test_count() << " test), " << ds.novel.size() << " novel views to " << a.out
              << "\n";
    return 0;
}

struct CheckpointArgs {
    std::string checkpoint;
    std::string config_file;
    StagedConfig staged;
    bool overwrite = false;

    void add_common(CLI::App* sub, bool checkpoint_required) {
        auto* c = sub->add_option("--checkpoint", checkpoint, "checkpoint file");
        if (checkpoint_required) c->required();
        sub->add_option("--config", config_file, "key=value config file");
        sub->add_flag("--overwrite", overwrite, "allow reusing a non-empty output directory");
        staged.add_options(sub);
    }
};

struct TrainArgs : CheckpointArgs {
    int stop_after = -1; // pause the schedule at this iteration; 0 checkpoints a fresh model
};

inline int run_train(const TrainArgs& a) {
    namespace fs = std::filesystem;
    RunConfig rc;
    Checkpoint cp;
    bool resumed = !a.checkpoint.empty();
    if (resumed) {
        cp = load_checkpoint(a.checkpoint);
        rc = cp.config;
    }
    rc = resolve_config(rc, a.config_file, a.staged);
    if (rc.dataset.empty()) throw UsageError("train: a dataset is required (--dataset)");
    rc.validate();
    claim_output_dir(rc.output, a.overwrite);

    Dataset ds = load_dataset(rc.dataset);
    apply_latent_policy(ds, rc);
    Trainer trainer(rc.train_config(), std::move(ds));
    if (resumed) restore_trainer(trainer, cp);

    fs::path out(rc.output);
    {
        std::ofstream cfg_out(out / "config.txt");
        cfg_out << serialize_config(rc);
    }
    fs::path csv_path = out / "train_log.csv";
    bool fresh_log = !resumed || !fs::exists(csv_path);
    std::ofstream csv(csv_path, fresh_log ? std::ios::trunc : std::ios::app);
    if (!csv) throw DataError("train: cannot open " + csv_path.string());
    if (fresh_log) csv << train_csv_header() << "\n";

    int target = rc.total_iterations;
    if (a.stop_after >= 0) target = std::min(target, a.stop_after);
    auto save_at = [&](const fs::path& p) {
        save_checkpoint(rc, trainer.model, trainer.adam, trainer.iteration, trainer.bounds,
                        p.string());
    };
    while (trainer.iteration < target) {
        int next = rc.checkpoint_every > 0
                       ? std::min(target, trainer.iteration + rc.checkpoint_every)
                       : target;
        trainer.run(next - trainer.iteration, &csv, rc.log_every);
        csv.flush();
        if (rc.checkpoint_every > 0 && trainer.iteration < target) {
            char name[48];
            std::snprintf(name, sizeof name, "checkpoint_%06d.ckpt", trainer.iteration);
            save_at(out / name);
        }
    }
    save_at(out / "checkpoint.ckpt");
    std::cout << "trained to iteration " << trainer.iteration << "; checkpoint at "
              << (out / "checkpoint.ckpt").string() << "\n";
    return 0;
}

struct RenderArgs : CheckpointArgs {
    std::string modality = "color";
    std::vector<int> frames;
    bool novel = false;
};

inline int run_render(const RenderArgs& a) {
    namespace fs = std::filesystem;
    Checkpoint cp = load_checkpoint(a.checkpoint);
    RunConfig rc = resolve_config(cp.config, a.config_file, a.staged);
    if (rc.dataset.empty()) throw UsageError("render: a dataset is required (--dataset)");
    claim_output_dir(rc.output, a.overwrite);

    Dataset ds = load_dataset(rc.dataset);
    apply_latent_policy(ds, rc);
    const auto& recs = a.novel ? ds.novel : ds.records;
    if (recs.empty()) throw DataError("render: the dataset has no frames for this view set");

    std::vector<int> frames = a.frames;
    if (frames.empty())
        for (int i = 0; i < int(recs.size()); ++i) frames.push_back(i);
    for (int f : frames)
        if (f < 0 || f >= int(recs.size()))
            throw UsageError("render: frame " + std::to_string(f) + " is out of range");

    RenderConfig rcfg = base_render_config(rc, cp);
    rcfg.modality = parse_modality(a.modality);
    rcfg.validate();

    fs::path out(rc.output);
    std::string prefix = modality_name(rcfg.modality) + (a.novel ? "_novel" : "");
    for (int f : frames) {
        Tensor latent = latent_row_of(cp.model, recs[std::size_t(f)].time_id);
        RenderResult res = render_image(cp.model, latent, recs[std::size_t(f)].camera, rcfg);
        write_png((out / numbered_png(prefix, f)).string(), res.image);
    }
    std::cout << "rendered " << frames.size() << " " << prefix << " frame(s) to " << rc.output
              << "\n";
    return 0;
}

struct EvaluateArgs : CheckpointArgs {};

inline int run_evaluate(const EvaluateArgs& a) {
    namespace fs = std::filesystem;
    Checkpoint cp = load_checkpoint(a.checkpoint);
    RunConfig rc = resolve_config(cp.config, a.config_file, a.staged);
    if (rc.dataset.empty()) throw UsageError("evaluate: a dataset is required (--dataset)");
    claim_output_dir(rc.output, a.overwrite);

    Dataset ds = load_dataset(rc.dataset);
    apply_latent_policy(ds, rc);
    Trainer trainer(rc.train_config(), ds);
    restore_trainer(trainer, cp);
    trainer.fit_test_latents(rc.test_latent_iterations);
    cp.bounds = trainer.bounds;

    fs::path out(rc.output);
    save_checkpoint(rc, trainer.model, trainer.adam, trainer.iteration, trainer.bounds,
                    (out / "checkpoint_eval.ckpt").string());

    RenderConfig rcfg = base_render_config(rc, cp);
    rcfg.validate();

    auto score = [&](const DatasetRecord& rec, const std::string& prefix, int idx,
                     std::ofstream& csv, std::vector<double>& ps, std::vector<double>& ss) {
        Tensor latent = latent_row_of(trainer.model, rec.time_id);
        RenderResult res = render_image(trainer.model, latent, rec.camera, rcfg);
        write_png((out / numbered_png(prefix, idx)).string(), res.image);
        double p = psnr(res.image, rec.image);
        double s = ssim(res.image, rec.image);
        char line[96];
        std::snprintf(line, sizeof line, "%d,%.10g,%.10g\n", idx, p, s);
        csv << line;
        ps.push_back(p);
        ss.push_back(s);
    };

    std::vector<double> test_psnr, test_ssim;
    {
        std::ofstream csv(out / "metrics.csv");
        csv << "frame,psnr,ssim\n";
        for (std::size_t i = 0; i < ds.records.size(); ++i)
            if (ds.records[i].is_test)
                score(ds.records[i], "eval", int(i), csv, test_psnr, test_ssim);
    }
    std::vector<double> novel_psnr, novel_ssim;
    if (!ds.novel.empty()) {
        std::ofstream csv(out / "novel_metrics.csv");
        csv << "frame,psnr,ssim\n";
        for (std::size_t i = 0; i < ds.novel.size(); ++i)
            score(ds.novel[i], "novel", int(i), csv, novel_psnr, novel_ssim);
    }

    std::cout << "evaluated " << test_psnr.size() << " test frame(s)";
    if (!test_psnr.empty())
        std::cout << ": mean psnr " << mean_of(test_psnr) << ", mean ssim " << mean_of(test_ssim);
    if (!novel_psnr.empty())
        std::cout << "; " << novel_psnr.size() << " novel view(s): mean psnr "
                  << mean_of(novel_psnr);
    std::cout << "\n";
    return 0;
}

struct EditArgs : CheckpointArgs {
    int frame = 0;
    std::vector<double> exaggerate;
    std::vector<double> remove_fg;
    std::vector<double> interpolate; // frame index, fraction
    std::vector<double> stabilize;
};

inline int run_edit(const EditArgs& a) {
    namespace fs = std::filesystem;
    int modes = int(!a.exaggerate.empty()) + int(!a.remove_fg.empty()) +
                int(!a.interpolate.empty()) + int(!a.stabilize.empty());
    if (modes != 1)
        throw UsageError("edit: pass exactly one of --exaggerate, --remove-foreground, "
                         "--interpolate-time, --stabilize");

    Checkpoint cp = load_checkpoint(a.checkpoint);
    RunConfig rc = resolve_config(cp.config, a.config_file, a.staged);
    if (rc.dataset.empty()) throw UsageError("edit: a dataset is required (--dataset)");
    claim_output_dir(rc.output, a.overwrite);

    Dataset ds = load_dataset(rc.dataset);
    apply_latent_policy(ds, rc);
    if (ds.records.empty()) throw DataError("edit: the dataset has no frames");

    RenderConfig rcfg = base_render_config(rc, cp);
    fs::path out(rc.output);

    int frame = a.frame;
    std::string name;
    Tensor latent;
    if (!a.interpolate.empty()) {
        frame = int(a.interpolate[0]);
        double t = a.interpolate[1];
        if (frame < 0 || frame + 1 >= int(ds.records.size()))
            throw UsageError("edit: interpolation needs two consecutive clip frames");
        Tensor from = latent_row_of(cp.model, ds.records[std::size_t(frame)].time_id);
        Tensor to = latent_row_of(cp.model, ds.records[std::size_t(frame) + 1].time_id);
        latent = interpolate_latents(from, to, t);
        name = "edit_interpolate.png";
    } else {
        if (frame < 0 || frame >= int(ds.records.size()))
            throw UsageError("edit: frame " + std::to_string(frame) + " is out of range");
        latent = latent_row_of(cp.model, ds.records[std::size_t(frame)].time_id);
        if (!a.exaggerate.empty()) {
            rcfg.edit.exaggeration = a.exaggerate[0];
            name = "edit_exaggerate.png";
        } else if (!a.remove_fg.empty()) {
            rcfg.edit.remove_threshold = a.remove_fg[0];
            name = "edit_remove.png";
        } else {
            rcfg.edit.stabilize_r_min = a.stabilize[0];
            name = "edit_stabilize.png";
        }
    }
    rcfg.validate();

    RenderResult res = render_image(cp.model, latent, ds.records[std::size_t(frame)].camera, rcfg);
    write_png((out / name).string(), res.image);
    std::cout << "wrote " << (out / name).string() << "\n";
    return 0;
}

struct StabilityArgs {
    std::string images;
    std::string out;
    bool overwrite = false;
};

inline int run_stability(const StabilityArgs& a) {
    namespace fs = std::filesystem;
    claim_output_dir(a.out, a.overwrite);
    if (!fs::is_directory(a.images)) throw DataError("stability: no such directory: " + a.images);

    std::vector<std::string> names;
    for (const auto& e : fs::directory_iterator(a.images))
        if (e.is_regular_file() && e.path().extension() == ".png")
            names.push_back(e.path().string());
    std::sort(names.begin(), names.end());
    std::vector<Image> frames;
    for (const auto& n : names) frames.push_back(read_png(n));
    if (frames.size() < 2) throw DataError("stability: need at least 2 png frames");

    StabilityReport rep = background_stability(frames);
    fs::path out(a.out);
    write_png((out / "stability.png").string(),
              gray_image(rep.std_image, frames[0].width, frames[0].height));
    std::ofstream csv(out / "stability.csv");
    csv << "rank,std\n";
    for (std::size_t i = 0; i < rep.sorted_values.size(); ++i) {
        char line[64];
        std::snprintf(line, sizeof line, "%zu,%.10g\n", i, rep.sorted_values[i]);
        csv << line;
    }
    std::cout << "stability over " << frames.size() << " frames: median std " << rep.median()
              << "\n";
    return 0;
}

inline int cli_run(int argc, char** argv) {
    CLI::App app{"deformable radiance field tool"};
    app.require_subcommand(1);

    MakeDatasetArgs mk;
    auto* mk_cmd = app.add_subcommand("make-dataset", "generate the synthetic blob dataset");
    mk_cmd->add_option("--out", mk.out, "dataset directory")->required();
    mk_cmd->add_option("--frames", mk.frames, "clip length");
    mk_cmd->add_option("--size", mk.size, "image width and height");
    mk_cmd->add_option("--oracle-samples", mk.oracle_samples, "ground-truth samples per ray");
    mk_cmd->add_option("--novel-stride", mk.novel_stride, "held-out view every k-th frame");
    mk_cmd->add_option("--seed", mk.seed, "dataset seed");
    mk_cmd->add_flag("--overwrite", mk.overwrite, "allow reusing a non-empty directory");

    TrainArgs tr;
    auto* tr_cmd = app.add_subcommand("train", "optimize a model on a dataset");
    tr.add_common(tr_cmd, false);
    tr_cmd->get_option("--checkpoint")->description("resume from this checkpoint");
    tr_cmd->add_option("--stop-after", tr.stop_after,
                       "pause at this iteration without shortening the schedule");

    RenderArgs rn;
    auto* rn_cmd = app.add_subcommand("render", "render dataset viewpoints from a checkpoint");
    rn.add_common(rn_cmd, true);
    rn_cmd->add_option("--modality", rn.modality, "color|rigidity|correspondence|canonical");
    rn_cmd->add_option("--frame", rn.frames, "frame indices (default: all)");
    rn_cmd->add_flag("--novel", rn.novel, "use the held-out novel viewpoints");

    EvaluateArgs ev;
    auto* ev_cmd = app.add_subcommand("evaluate", "fit held-out latents and report metrics");
    ev.add_common(ev_cmd, true);

    EditArgs ed;
    auto* ed_cmd = app.add_subcommand("edit", "render with a scene edit applied");
    ed.add_common(ed_cmd, true);
    ed_cmd->add_option("--frame", ed.frame, "clip frame to render");
    ed_cmd->add_option("--exaggerate", ed.exaggerate, "offset multiplier")->expected(1);
    ed_cmd->add_option("--remove-foreground", ed.remove_fg, "transparency threshold on w")
        ->expected(1);
    ed_cmd->add_option("--interpolate-time", ed.interpolate, "frame index and fraction")
        ->expected(2);
    ed_cmd->add_option("--stabilize", ed.stabilize, "snap w below this to rigid")->expected(1);

    StabilityArgs st;
    auto* st_cmd = app.add_subcommand("stability", "per-pixel temporal std over an image dir");
    st_cmd->add_option("--images", st.images, "directory of png frames")->required();
    st_cmd->add_option("--out", st.out, "output directory")->required();
    st_cmd->add_flag("--overwrite", st.overwrite, "allow reusing a non-empty directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    if (app.got_subcommand(mk_cmd)) return run_make_dataset(mk);
    if (app.got_subcommand(tr_cmd)) return run_train(tr);
    if (app.got_subcommand(rn_cmd)) return run_render(rn);
    if (app.got_subcommand(ev_cmd)) return run_evaluate(ev);
    if (app.got_subcommand(ed_cmd)) return run_edit(ed);
    if (app.got_subcommand(st_cmd)) return run_stability(st);
    throw UsageError("no subcommand selected");
}

} // namespace detail

// Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.
inline int cli_main(int argc, char** argv) {
    try {
        return detail::cli_run(argc, argv);
    } catch (const UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 1;
    } catch (const DataError& e) {
        std::cerr << "data error: " << e.what() << "\n";
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numerical failure: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}

} // namespace warpfield
