#pragma once

#include <cmath>
#include <ostream>
#include <string>
#include <vector>

#include "composite.hpp"
#include "core/common.hpp"
#include "dataset.hpp"
#include "deform.hpp"
#include "fields.hpp"
#include "losses.hpp"
#include "optim.hpp"
#include "render.hpp"
#include "sampling.hpp"

namespace warpfield {

struct TrainConfig {
    ModelConfig model;
    TrainSchedule schedule;
    LossWeights weights; // full values; the schedule ramps toward them
    int coarse_samples = 64;
    int fine_samples = 64;
    std::uint64_t seed = 1;
    bool naive_offsets = false;            // penalize gated offsets instead of raw
    bool disable_offsets_loss = false;
    bool disable_divergence_loss = false;
    bool offsets_exponent_at_straight = false; // evaluate the norm exponent at straight points

    bool bending_active() const { return model.bending_enabled && !model.naive_conditioning; }
    bool latents_active() const { return model.bending_enabled || model.naive_conditioning; }
    bool divergence_active() const {
        return !disable_divergence_loss && bending_active() && weights.divergence > 0;
    }
    bool offsets_active() const { return !disable_offsets_loss && bending_active(); }

    void validate() const {
        model.validate();
        schedule.validate();
        weights.validate();
        if (coarse_samples < 2 || fine_samples < 1)
            throw UsageError("train: need at least 2 coarse and 1 fine sample");
    }
};

// ---------------------------------------------------------------------------
// Batch assembly
// ---------------------------------------------------------------------------

struct RayBatch {
    RayBundle rays;
    Tensor truth;                 // [R,3]
    std::vector<int> latent_row;  // per ray
    double near = 0, far = 0;
};

// Uniform over the pixels of the given frames. All frames must share one
// depth range (one frustum parameterization per clip).
inline RayBatch draw_batch(const Dataset& ds, const std::vector<int>& frame_indices, int rays,
                           std::uint64_t seed, int iteration) {
    if (frame_indices.empty()) throw UsageError("draw_batch: no frames to draw from");
    if (rays < 1) throw UsageError("draw_batch: need at least one ray");
    Rng rng = derive_rng(seed, Stream::batch_pixels, std::uint64_t(iteration));

    RayBatch batch;
    batch.truth = Tensor(rays, 3);
    batch.rays.origins = Tensor(rays, 3);
    batch.rays.directions = Tensor(rays, 3);
    batch.near = ds.records[std::size_t(frame_indices[0])].camera.near;
    batch.far = ds.records[std::size_t(frame_indices[0])].camera.far;

    for (int r = 0; r < rays; ++r) {
        int f = frame_indices[std::size_t(rng.below(frame_indices.size()))];
        const DatasetRecord& rec = ds.records[std::size_t(f)];
        if (rec.camera.near != batch.near || rec.camera.far != batch.far)
            throw UsageError("draw_batch: all frames must share one depth range");
        int u = int(rng.below(std::uint64_t(rec.camera.width)));
        int v = int(rng.below(std::uint64_t(rec.camera.height)));
        RayBundle one = generate_rays(rec.camera, {{u, v}});
        for (int c = 0; c < 3; ++c) {
            batch.rays.origins.at(r, c) = one.origins.at(0, c);
            batch.rays.directions.at(r, c) = one.directions.at(0, c);
            batch.truth.at(r, c) = rec.image.pixels.at(v * rec.camera.width + u, c);
        }
        batch.rays.pixels.push_back({u, v});
        batch.latent_row.push_back(rec.time_id);
    }
    return batch;
}

// Everything random about one step, frozen up front so the gradient checker
// can replay the exact same objective.
struct StepDraws {
    RayBatch batch;
    std::vector<std::vector<double>> coarse_depths;
    Tensor div_tangent;                          // [R*Sc,3]; empty when divergence is off
    std::vector<std::vector<double>> fine_depths; // empty: draw from coarse weights inside
    Tensor frozen_alpha, frozen_occupancy;       // replay overrides for the detached weights
};

inline StepDraws draw_step(const Dataset& ds, const std::vector<int>& frame_indices,
                           const TrainConfig& cfg, int iteration) {
    StepDraws d;
    d.batch = draw_batch(ds, frame_indices, cfg.schedule.batch_rays, cfg.seed, iteration);
    int R = d.batch.rays.count();
    d.coarse_depths.resize(std::size_t(R));
    for (int r = 0; r < R; ++r) {
        Rng rng = derive_rng(cfg.seed, Stream::stratified_coarse, std::uint64_t(iteration),
                             std::uint64_t(r));
        d.coarse_depths[std::size_t(r)] =
            stratified_sample(d.batch.near, d.batch.far, cfg.coarse_samples, rng, true);
    }
    if (cfg.divergence_active()) {
        Rng rng = derive_rng(cfg.seed, Stream::divergence_probe, std::uint64_t(iteration));
        d.div_tangent = random_normal(R * cfg.coarse_samples, 3, rng);
    }
    return d;
}

// ---------------------------------------------------------------------------
// One training objective on the tape
// ---------------------------------------------------------------------------

struct StepLossOut {
    Var total, data, offsets, divergence; // offsets/divergence are zero constants when off
    std::vector<std::vector<double>> fine_depths_used;
    Tensor alpha_used, occupancy_used; // the detached per-sample weights the losses saw
    Tensor coarse_bent, fine_bent;     // plain values, for canonical-bounds tracking
};

namespace detail {

// [N,T] one-hot rows routing each sample to its ray's latent table row
inline Tensor latent_selector(const std::vector<int>& latent_row, int samples, int table_rows) {
    int R = int(latent_row.size());
    Tensor sel(R * samples, table_rows);
    for (int r = 0; r < R; ++r) {
        int t = latent_row[std::size_t(r)];
        if (t < 0 || t >= table_rows) throw UsageError("latent row out of table range");
        for (int j = 0; j < samples; ++j) sel.at(r * samples + j, t) = 1.0;
    }
    return sel;
}

struct TapePass {
    TapeRenderOutput ro;
    TapeBentSamples bend;
    bool bent_valid = false;
    Tensor bent_values; // straight points when bending is off
};

inline TapePass tape_pass(Tape& tape, TapeModel& tm, const SceneModel& model,
                          const TrainConfig& cfg, const RayBatch& batch, const SampleSet& set,
                          FieldKind kind, const Tensor* div_tangent) {
    int R = set.rays(), S = set.samples_per_ray();
    Tensor pts = sample_points(batch.rays, set);
    Var lat_rows = matmul(
        tape.constant(latent_selector(batch.latent_row, S, model.cfg.latent_count)), tm.latents);

    TapePass out;
    Var bent;
    if (cfg.bending_active()) {
        out.bend = bend_points_tape(tape, tm, pts, lat_rows, div_tangent,
                                    model.cfg.rigidity_enabled);
        out.bent_valid = true;
        bent = out.bend.bent;
        out.bent_values = bent.val();
    } else {
        bent = tape.constant(pts);
        out.bent_values = pts;
    }

    Var enc = encode_position<TapeOps>(model.cfg.encoding, bent);
    if (model.cfg.naive_conditioning) enc = concat_cols(enc, lat_rows);
    const MlpVars& net = kind == FieldKind::coarse ? tm.canonical_coarse : tm.canonical_fine;
    auto ce = canonical_forward<TapeOps, Var>(net, enc, model.cfg.canonical_skip);

    Var rgb = ce.rgb;
    if (model.cfg.has_view_head()) {
        // view directions are fed as constants: appearance conditioning only,
        // no gradient through the direction geometry
        Tensor dirs;
        if (model.cfg.view_dependence == ViewDependence::approximate) {
            dirs = approximate_view_dirs(out.bent_values, R, S, batch.rays.directions).dirs;
        } else {
            Tensor per_point = repeat_rows_per_ray(batch.rays.directions, S);
            dirs = exact_view_dirs(model_gated_bend_dual(model, lat_rows.val(), BendOptions{}),
                                   pts, per_point)
                       .dirs;
        }
        Tensor enc_dir = encode_position<PlainOps>(model.cfg.dir_encoding, dirs);
        const MlpVars& head = kind == FieldKind::coarse ? tm.view_head_coarse : tm.view_head_fine;
        rgb = view_head_forward<TapeOps, Var>(head, ce.feature, tape.constant(enc_dir));
    }

    out.ro = composite_tape(rgb, reshape(ce.sigma, R, S), set.deltas);
    return out;
}

} // namespace detail

inline StepLossOut build_step_loss(Tape& tape, TapeModel& tm, const SceneModel& model,
                                   const TrainConfig& cfg, const StepDraws& draws,
                                   const ScheduleState& sched) {
    const RayBatch& batch = draws.batch;
    int R = batch.rays.count();
    int Sc = cfg.coarse_samples;
    int N = R * Sc;

    SampleSet coarse_set = make_sample_set(draws.coarse_depths, batch.far, SampleTag::coarse);
    const Tensor* tangent = draws.div_tangent.rows() == N ? &draws.div_tangent : nullptr;
    detail::TapePass coarse =
        detail::tape_pass(tape, tm, model, cfg, batch, coarse_set, FieldKind::coarse, tangent);

    // regularizer inputs ride the coarse pass; alpha and occupancy detach
    Tensor alpha(N, 1), occupancy(N, 1);
    if (draws.frozen_alpha.rows() == N && draws.frozen_occupancy.rows() == N) {
        alpha = draws.frozen_alpha;
        occupancy = draws.frozen_occupancy;
    } else {
        Tensor w = coarse.ro.weights.val(), o = coarse.ro.occ.val();
        for (int r = 0; r < R; ++r)
            for (int j = 0; j < Sc; ++j) {
                alpha.at(r * Sc + j, 0) = w.at(r, j);
                occupancy.at(r * Sc + j, 0) = o.at(r, j);
            }
    }

    StepLossOut out;
    out.alpha_used = alpha;
    out.occupancy_used = occupancy;
    out.coarse_bent = coarse.bent_values;
    Var zero = tape.constant(Tensor(1, 1));
    out.offsets = zero;
    out.divergence = zero;

    if (cfg.offsets_active()) {
        Var w_pen = coarse.bend.rigidity; // at the straight points
        Var w_exp;
        if (!model.cfg.rigidity_enabled)
            w_exp = tape.constant(Tensor::full(N, 1, 1.0));
        else if (cfg.offsets_exponent_at_straight)
            w_exp = coarse.bend.rigidity;
        else
            w_exp = rigidity_forward<TapeOps, Var>(tm.rigidity, coarse.bend.bent);
        out.offsets = cfg.naive_offsets
                          ? naive_offsets_loss(coarse.bend.gated, w_exp, alpha)
                          : offsets_loss(coarse.bend.raw, w_exp, w_pen, alpha,
                                         sched.weights.rigidity);
    }
    if (cfg.divergence_active() && tangent != nullptr)
        out.divergence = divergence_loss(coarse.bend.divergence, occupancy);

    // fine pass over the merged sample set
    if (!draws.fine_depths.empty()) {
        out.fine_depths_used = draws.fine_depths;
    } else {
        Tensor w = coarse.ro.weights.val();
        out.fine_depths_used.resize(std::size_t(R));
        for (int r = 0; r < R; ++r) {
            std::vector<double> row(static_cast<std::size_t>(Sc));
            for (int j = 0; j < Sc; ++j) row[std::size_t(j)] = w.at(r, j);
            Rng rng = derive_rng(cfg.seed, Stream::importance_fine, 0, std::uint64_t(r));
            std::vector<double> fine = importance_sample(row, draws.coarse_depths[std::size_t(r)],
                                                         cfg.fine_samples, rng, false);
            out.fine_depths_used[std::size_t(r)] =
                merge_depths(draws.coarse_depths[std::size_t(r)], fine);
        }
    }
    SampleSet fine_set = make_sample_set(out.fine_depths_used, batch.far, SampleTag::fine);
    detail::TapePass fine =
        detail::tape_pass(tape, tm, model, cfg, batch, fine_set, FieldKind::fine, nullptr);
    out.fine_bent = fine.bent_values;

    out.data = data_loss(coarse.ro.rgb, fine.ro.rgb, batch.truth);
    out.total = total_loss(out.data, out.offsets, out.divergence, sched.weights);
    return out;
}

// ---------------------------------------------------------------------------
// Trainer
// ---------------------------------------------------------------------------

struct TrainStats {
    int iteration = 0;
    double lr = 0;
    LossWeights weights;
    double data = 0, offsets = 0, divergence = 0, total = 0;
};

inline std::string train_csv_header() {
    return "iteration,lr,w_rigidity,w_offsets,w_divergence,loss_data,loss_offsets,"
           "loss_divergence,loss_total";
}

inline std::string train_csv_line(const TrainStats& s) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g",
                  s.iteration, s.lr, s.weights.rigidity, s.weights.offsets, s.weights.divergence,
                  s.data, s.offsets, s.divergence, s.total);
    return buf;
}

class Trainer {
public:
    TrainConfig cfg;
    Dataset data;
    SceneModel model;
    Adam adam;
    CanonicalBounds bounds;
    int iteration = 0;

    Trainer(const TrainConfig& config, Dataset dataset)
        : cfg(config), data(std::move(dataset)), model(init_trainer_model(cfg, data)),
          adam(param_refs(model)) {
        for (const auto& rec : data.records)
            if (!rec.is_test) train_indices_.push_back(int(&rec - data.records.data()));
        if (train_indices_.empty()) throw DataError("trainer: dataset has no training frames");
    }

    const std::vector<int>& train_indices() const { return train_indices_; }

    TrainStats step() {
        ScheduleState sched = schedule_at(iteration, cfg.schedule, cfg.weights);
        StepDraws draws = draw_step(data, train_indices_, cfg, iteration);

        Tape tape;
        TapeModel tm = register_model(tape, model, train_mask());
        StepLossOut sl;
        GradientMap gm;
        try {
            sl = build_step_loss(tape, tm, model, cfg, draws, sched);
            double total = sl.total.val().at(0, 0);
            if (!std::isfinite(total)) throw NumericError("non-finite training loss");
            gm = tape.backward(sl.total);
        } catch (const NumericError& e) {
            throw NumericError("iteration " + std::to_string(iteration) + ": " + e.what());
        }
        auto vars = tape_param_vars(model, tm);
        std::vector<Tensor> grads;
        grads.reserve(vars.size());
        for (auto& [name, var] : vars) grads.push_back(gm.grad(var));
        adam.step(grads, sched.lr);

        bounds.include(sl.coarse_bent);
        bounds.include(sl.fine_bent);

        TrainStats stats;
        stats.iteration = iteration;
        stats.lr = sched.lr;
        stats.weights = sched.weights;
        stats.data = sl.data.val().at(0, 0);
        stats.offsets = sl.offsets.val().at(0, 0);
        stats.divergence = sl.divergence.val().at(0, 0);
        stats.total = sl.total.val().at(0, 0);
        ++iteration;
        return stats;
    }

    void run(int steps, std::ostream* csv = nullptr, int log_every = 100) {
        for (int i = 0; i < steps; ++i) {
            TrainStats s = step();
            if (csv && (s.iteration % log_every == 0 || i + 1 == steps))
                *csv << train_csv_line(s) << "\n";
        }
    }

    // Auto-decodes the latent rows of the held-out frames: fresh optimizer over
    // the latent table only, batches drawn from test frames, networks frozen.
    void fit_test_latents(int steps) {
        std::vector<int> test_indices;
        for (const auto& rec : data.records)
            if (rec.is_test) test_indices.push_back(int(&rec - data.records.data()));
        if (test_indices.empty()) return;
        if (!cfg.latents_active()) return; // nothing for latents to influence

        ScheduleState sched = schedule_at(cfg.schedule.total_iterations, cfg.schedule, cfg.weights);
        Adam latent_adam({{"latents", &model.latents}});
        TrainMask mask;
        mask.canonical = mask.bending = mask.rigidity = mask.view = false;

        for (int i = 0; i < steps; ++i) {
            int it = cfg.schedule.total_iterations + i; // fresh stream slots
            StepDraws draws = draw_step(data, test_indices, cfg, it);
            Tape tape;
            TapeModel tm = register_model(tape, model, mask);
            StepLossOut sl = build_step_loss(tape, tm, model, cfg, draws, sched);
            if (!std::isfinite(sl.total.val().at(0, 0)))
                throw NumericError("fit_test_latents: non-finite loss at step " +
                                   std::to_string(i));
            GradientMap gm = tape.backward(sl.total);
            latent_adam.step({gm.grad(tm.latents)}, sched.lr);
        }
    }

private:
    std::vector<int> train_indices_;

    TrainMask train_mask() const {
        TrainMask mask;
        mask.bending = cfg.bending_active();
        mask.rigidity = cfg.bending_active() && cfg.model.rigidity_enabled;
        mask.latents = cfg.latents_active();
        mask.view = cfg.model.has_view_head();
        return mask;
    }

    static SceneModel init_trainer_model(TrainConfig& cfg, const Dataset& data) {
        cfg.validate();
        if (data.records.empty()) throw DataError("trainer: empty dataset");
        int max_time = 0;
        for (const auto& rec : data.records) max_time = std::max(max_time, rec.time_id);
        cfg.model.latent_count = max_time + 1;
        SceneModel m = init_model(cfg.model, cfg.seed);
        // a latent row is a test row when no training frame uses it
        std::vector<std::uint8_t> used_by_train(std::size_t(max_time + 1), 0);
        for (const auto& rec : data.records)
            if (!rec.is_test) used_by_train[std::size_t(rec.time_id)] = 1;
        for (int t = 0; t <= max_time; ++t) m.latent_is_test[std::size_t(t)] = !used_by_train[std::size_t(t)];
        return m;
    }
};

// ---------------------------------------------------------------------------
// Full-objective gradient check (frozen draws replayed around each probe)
// ---------------------------------------------------------------------------

struct GradCheckReport {
    double max_rel_error = 0;
    std::string worst_param;
    int checked = 0;
};

inline GradCheckReport check_training_gradients(const TrainConfig& config, const Dataset& ds,
                                                int stride = 1, double eps = 1e-5,
                                                double perturb = 0.05) {
    TrainConfig cfg = config;
    cfg.validate();
    Trainer boot(cfg, ds); // sizes the latent table consistently
    SceneModel& model = boot.model;
    cfg = boot.cfg;

    // jitter every parameter off its init so the zero-initialized offset and
    // rigidity paths carry live gradients instead of degenerate zeros
    if (perturb > 0) {
        Rng rng = derive_rng(cfg.seed, Stream::misc);
        for (auto& [name, t] : param_refs(model))
            for (std::size_t i = 0; i < t->size(); ++i)
                (*t)[i] += perturb * (2.0 * rng.uniform() - 1.0);
    }

    ScheduleState sched = schedule_at(1, cfg.schedule, cfg.weights);
    StepDraws draws = draw_step(ds, boot.train_indices(), cfg, 0);

    // analytic pass; it also fixes the fine placement and the detached
    // compositing weights so the difference quotients probe the same objective
    Tape tape;
    TapeModel tm = register_model(tape, model);
    StepLossOut sl = build_step_loss(tape, tm, model, cfg, draws, sched);
    GradientMap gm = tape.backward(sl.total);
    draws.fine_depths = sl.fine_depths_used;
    draws.frozen_alpha = sl.alpha_used;
    draws.frozen_occupancy = sl.occupancy_used;

    auto loss_value = [&]() {
        Tape replay;
        TapeModel rtm = register_model(replay, model);
        StepLossOut out = build_step_loss(replay, rtm, model, cfg, draws, sched);
        return out.total.val().at(0, 0);
    };

    auto vars = tape_param_vars(model, tm);
    ParamRefs refs = param_refs(model);
    GradCheckReport rep;
    for (std::size_t p = 0; p < refs.size(); ++p) {
        Tensor grad = gm.grad(vars[p].second);
        Tensor& w = *refs[p].second;
        for (std::size_t i = 0; i < w.size(); i += std::size_t(stride)) {
            double keep = w[i];
            w[i] = keep + eps;
            double hi = loss_value();
            w[i] = keep - eps;
            double lo = loss_value();
            w[i] = keep;
            double fd = (hi - lo) / (2 * eps);
            double ad = grad[i];
            double rel = std::abs(ad - fd) / std::max(1e-8, std::abs(ad) + std::abs(fd));
            ++rep.checked;
            if (rel > rep.max_rel_error) {
                rep.max_rel_error = rel;
                rep.worst_param = refs[p].first + "[" + std::to_string(i) + "]";
            }
        }
    }
    return rep;
}

} // namespace warpfield
