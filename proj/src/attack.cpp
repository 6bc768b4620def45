#include "semadv/attack.hpp"

#include <atomic>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <thread>

#include <json.hpp>

namespace semadv::attack {

namespace fs = std::filesystem;
using nlohmann::json;
using nn::Var;
using objectives::LossBreakdown;

std::string to_string(Method m) {
    switch (m) {
        case Method::kSemanticFeature: return "semantic-feature";
        case Method::kSemanticAttribute: return "semantic-attribute";
        case Method::kPixelCw: return "cw";
        case Method::kEditThenCw: return "stargan-cw";
    }
    throw std::logic_error("bad method");
}

Method method_from_string(const std::string& s) {
    if (s == "semantic-feature") return Method::kSemanticFeature;
    if (s == "semantic-attribute") return Method::kSemanticAttribute;
    if (s == "cw") return Method::kPixelCw;
    if (s == "stargan-cw") return Method::kEditThenCw;
    throw std::invalid_argument("unknown attack method: " + s);
}

std::string to_string(EditDirection d) {
    switch (d) {
        case EditDirection::kAdd: return "add";
        case EditDirection::kRemove: return "remove";
        case EditDirection::kFlip: return "flip";
    }
    throw std::logic_error("bad direction");
}

EditDirection direction_from_string(const std::string& s) {
    if (s == "add") return EditDirection::kAdd;
    if (s == "remove") return EditDirection::kRemove;
    if (s == "flip") return EditDirection::kFlip;
    throw std::invalid_argument("unknown edit direction: " + s);
}

void AttackConfig::validate() const {
    if (steps < 0) throw std::invalid_argument("attack steps must be >= 0");
    if (!(rate > 0.0f)) throw std::invalid_argument("attack rate must be > 0");
    if (lambda < 0.0f) throw std::invalid_argument("attack lambda must be >= 0");
}

std::string AttackConfig::to_json() const {
    json j;
    j["method"] = attack::to_string(method);
    j["layer"] = layer;
    j["steps"] = steps;
    j["rate"] = rate;
    j["lambda"] = lambda;
    j["g_fpr"] = g_fpr;
    j["attribute"] = attribute;
    j["direction"] = attack::to_string(direction);
    j["seed"] = seed;
    j["cw_recon_weight"] = cw_recon_weight;
    j["invert_steps"] = invert_steps;
    j["invert_rate"] = invert_rate;
    j["polish_steps"] = polish_steps;
    return j.dump();
}

AttackConfig AttackConfig::from_json(const std::string& text) {
    json j = json::parse(text);
    AttackConfig c;
    c.method = method_from_string(j.value("method", "semantic-feature"));
    c.layer = j.value("layer", "f0");
    c.steps = j.value("steps", 500);
    c.rate = j.value("rate", 0.01f);
    c.lambda = j.value("lambda", 0.01f);
    c.g_fpr = j.value("g_fpr", "1e-2");
    c.attribute = j.value("attribute", "");
    c.direction = direction_from_string(j.value("direction", "flip"));
    c.seed = j.value("seed", uint64_t{0});
    c.cw_recon_weight = j.value("cw_recon_weight", 5.0f);
    c.invert_steps = j.value("invert_steps", 50);
    c.invert_rate = j.value("invert_rate", 0.01f);
    c.polish_steps = j.value("polish_steps", 10);
    return c;
}

void apply_budget_schedule(AttackConfig& cfg) {
    const std::string strictest = targets::fpr_grid().back().first;
    if (cfg.g_fpr == strictest) {
        cfg.steps = 200;
        cfg.rate = 0.05f;
    } else {
        cfg.steps = 500;
        cfg.rate = 0.01f;
    }
}

AdversarialTarget AdversarialTarget::identity(Tensor target_image, double kappa) {
    AdversarialTarget t;
    t.task = Task::kIdentity;
    t.target_image = std::move(target_image);
    t.kappa = kappa;
    return t;
}

AttackInstance AttackInstance::make(int id, uint32_t attr_bits) {
    AttackInstance inst;
    inst.identity = synth::Identity::from_id(id);
    inst.attrs = synth::attributes_from_bits(attr_bits);
    inst.image = synth::render(inst.identity, inst.attrs);
    return inst;
}

std::string AttackResult::to_json(bool include_trace) const {
    json j;
    j["schema"] = "semadv-result-v1";
    j["method"] = method;
    j["attribute"] = attribute;
    j["source_id"] = source_id;
    j["target_id"] = target_id;
    j["target_bits"] = target_bits;
    j["success"] = success;
    j["distance_or_metric"] = distance_or_metric;
    j["pre_attack_metric"] = pre_attack_metric;
    j["loss"] = {{"adv", final_loss.adv},
                 {"smooth", final_loss.smooth},
                 {"lambda", final_loss.lambda},
                 {"total", final_loss.total}};
    j["steps_run"] = step_trace.size();
    j["wall_time_sec"] = wall_time_sec;
    j["config"] = json::parse(config_json.empty() ? "{}" : config_json);
    if (include_trace) j["step_trace"] = step_trace;
    return j.dump();
}

AttackResult AttackResult::from_json(const std::string& text) {
    json j = json::parse(text);
    AttackResult r;
    r.method = j.value("method", "");
    r.attribute = j.value("attribute", "");
    r.source_id = j.value("source_id", -1);
    r.target_id = j.value("target_id", -1);
    r.target_bits = j.value("target_bits", 0u);
    r.success = j.value("success", false);
    r.distance_or_metric = j.value("distance_or_metric", 0.0);
    r.pre_attack_metric = j.value("pre_attack_metric", 0.0);
    if (j.contains("loss")) {
        r.final_loss.adv = j["loss"].value("adv", 0.0);
        r.final_loss.smooth = j["loss"].value("smooth", 0.0);
        r.final_loss.lambda = j["loss"].value("lambda", 0.0);
        r.final_loss.total = j["loss"].value("total", 0.0);
    }
    r.wall_time_sec = j.value("wall_time_sec", 0.0);
    if (j.contains("config")) r.config_json = j["config"].dump();
    if (j.contains("step_trace")) r.step_trace = j["step_trace"].get<std::vector<double>>();
    if (j.contains("steps_run")) r.step_trace.resize(j["steps_run"].get<size_t>(), 0.0);
    return r;
}

Tensor AttackResult::target_image() const {
    if (target_id < 0) throw std::logic_error("result has no target identity");
    return synth::render(synth::Identity::from_id(target_id),
                         synth::attributes_from_bits(target_bits));
}

namespace {

synth::AttributeVector apply_edit(const synth::AttributeVector& attrs, const AttackConfig& cfg) {
    if (cfg.attribute.empty()) return attrs;
    switch (cfg.direction) {
        case EditDirection::kAdd: return attrs.with_set(cfg.attribute, 1.0f);
        case EditDirection::kRemove: return attrs.with_set(cfg.attribute, 0.0f);
        case EditDirection::kFlip: return attrs.flipped(cfg.attribute);
    }
    throw std::logic_error("bad direction");
}

Tensor squeeze_image(const Tensor& batch) {
    return Tensor({batch.dim(1), batch.dim(2), batch.dim(3)}, batch.vec());
}

struct IterationEval {
    double total = 0.0;
    double adv = 0.0;
    double smooth = 0.0;
    double metric = 0.0;   // distance (identity) or task metric (landmarks)
    bool success = false;
    Tensor image;
};

/// Shared best-iterate optimizer: evaluates the closure at the initial
/// point, then steps Adam on the variable, recording per-step totals.
/// Ties on total loss keep the earliest iterate. Stops polish_steps
/// after the first success.
struct OptimizeOutcome {
    IterationEval best;
    std::vector<double> trace;
};

template <typename EvalFn>
OptimizeOutcome optimize_variable(Tensor& variable, const AttackConfig& cfg, EvalFn eval_fn,
                                  float clamp_lo, float clamp_hi) {
    nn::Adam opt(cfg.rate);
    OptimizeOutcome out;

    Var var = Var::leaf(variable);
    IterationEval ev = eval_fn(var, /*need_grad=*/cfg.steps > 0);
    out.best = ev;

    int polish_left = ev.success ? cfg.polish_steps : -1;
    for (int step = 0; step < cfg.steps; ++step) {
        if (polish_left == 0) break;
        opt.step(var.mutable_value(), var.grad());
        variable = var.value();
        variable.clamp(clamp_lo, clamp_hi);

        var = Var::leaf(variable);
        ev = eval_fn(var, /*need_grad=*/true);
        out.trace.push_back(ev.total);
        if (ev.total < out.best.total) out.best = ev;
        if (polish_left < 0 && ev.success)
            polish_left = cfg.polish_steps;
        else if (polish_left > 0)
            --polish_left;
    }
    return out;
}

}  // namespace

AttackResult attack_semantic(const AttackInstance& instance, const AttackConfig& cfg,
                             const gen::Generator& generator,
                             const targets::Verifier& target_model,
                             const AdversarialTarget& target) {
    cfg.validate();
    if (target.task != AdversarialTarget::Task::kIdentity)
        throw std::invalid_argument("attack_semantic expects an identity target");
    const auto t0 = std::chrono::steady_clock::now();

    const synth::AttributeVector c = instance.attrs;
    const synth::AttributeVector c_new = apply_edit(c, cfg);
    const double kappa = target.kappa;
    Tensor e_tgt = target_model.embed(target.target_image);
    Tensor e_tgt_row({1, e_tgt.dim(0)}, e_tgt.vec());
    Var e_tgt_const = Var::constant(e_tgt_row);

    Tensor x_prime = generator.invert_reconstruction(instance.image, c, cfg.invert_steps,
                                                     cfg.invert_rate);

    AttackResult result;
    result.method = to_string(cfg.method);
    result.attribute = cfg.attribute;
    result.source_id = instance.identity.id;
    result.config_json = cfg.to_json();

    auto eval_distance = [&](const Var& image_batch, bool) {
        Var e = nn::l2_normalize_rows(target_model.embed_var(image_batch));
        return nn::sqrt_scalar(nn::l2sq_diff(e, e_tgt_const));
    };

    if (cfg.method == Method::kSemanticFeature) {
        gen::FeatureMap fa = generator.encode(x_prime, c, cfg.layer);
        gen::FeatureMap fb = generator.encode(x_prime, c_new, cfg.layer);
        Tensor beta(generator.tap(cfg.layer).shape, 0.5f);

        auto evaluate = [&](const Var& beta_var, bool need_grad) {
            Var img = interp::feature_interpolate_var(generator, beta_var, fa.tensor, fb.tensor,
                                                      cfg.layer);
            Var dist = eval_distance(img, need_grad);
            Var adv = nn::clamp_min_scalar(dist, static_cast<float>(kappa));
            Var smooth = nn::smoothness_penalty(beta_var);
            Var total = nn::add(adv, nn::scale(smooth, cfg.lambda));
            if (need_grad) total.backward();
            IterationEval ev;
            ev.total = total.value()[0];
            ev.adv = adv.value()[0];
            ev.smooth = smooth.value()[0];
            ev.metric = dist.value()[0];
            ev.success = ev.metric < kappa;
            ev.image = squeeze_image(img.value());
            return ev;
        };
        OptimizeOutcome out = optimize_variable(beta, cfg, evaluate, 0.0f, 1.0f);
        result.adversarial_image = out.best.image;
        result.final_loss = objectives::total_loss(out.best.adv, out.best.smooth, cfg.lambda);
        result.success = out.best.success;
        result.distance_or_metric = out.best.metric;
        result.step_trace = std::move(out.trace);
    } else if (cfg.method == Method::kSemanticAttribute) {
        Tensor c_t({static_cast<int>(c.values.size())});
        Tensor cn_t({static_cast<int>(c_new.values.size())});
        for (size_t i = 0; i < c.values.size(); ++i) {
            c_t[i] = c.values[i];
            cn_t[i] = c_new.values[i];
        }
        Var c_const = Var::constant(c_t), cn_const = Var::constant(cn_t);
        Tensor x_in({1, x_prime.dim(0), x_prime.dim(1), x_prime.dim(2)}, x_prime.vec());
        Var x_const = Var::constant(x_in);
        Tensor alpha({1}, 0.5f);

        auto evaluate = [&](const Var& alpha_var, bool need_grad) {
            Var one_minus = nn::add_scalar(nn::scale(alpha_var, -1.0f), 1.0f);
            Var c_star = nn::add(nn::mul_scalar_var(c_const, alpha_var),
                                 nn::mul_scalar_var(cn_const, one_minus));
            Var img = generator.forward_var(x_const, c_star);
            Var dist = eval_distance(img, need_grad);
            Var adv = nn::clamp_min_scalar(dist, static_cast<float>(kappa));
            if (need_grad) adv.backward();
            IterationEval ev;
            ev.total = adv.value()[0];
            ev.adv = adv.value()[0];
            ev.smooth = 0.0;
            ev.metric = dist.value()[0];
            ev.success = ev.metric < kappa;
            ev.image = squeeze_image(img.value());
            return ev;
        };
        OptimizeOutcome out = optimize_variable(alpha, cfg, evaluate, 0.0f, 1.0f);
        result.adversarial_image = out.best.image;
        result.final_loss = objectives::total_loss(out.best.adv, 0.0, cfg.lambda);
        result.success = out.best.success;
        result.distance_or_metric = out.best.metric;
        result.step_trace = std::move(out.trace);
    } else {
        throw std::invalid_argument("attack_semantic: method must be semantic-*");
    }

    result.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

namespace {
AttackResult cw_core(const Tensor& anchor, const AttackConfig& cfg,
                     const targets::Verifier& target_model, const AdversarialTarget& target) {
    const auto t0 = std::chrono::steady_clock::now();
    const double kappa = target.kappa;
    Tensor e_tgt = target_model.embed(target.target_image);
    Tensor e_tgt_row({1, e_tgt.dim(0)}, e_tgt.vec());
    Var e_tgt_const = Var::constant(e_tgt_row);

    Tensor anchor_b({1, anchor.dim(0), anchor.dim(1), anchor.dim(2)}, anchor.vec());
    Var anchor_const = Var::constant(anchor_b);
    Tensor pixels = anchor_b;

    auto evaluate = [&](const Var& px, bool need_grad) {
        Var e = nn::l2_normalize_rows(target_model.embed_var(px));
        Var dist = nn::sqrt_scalar(nn::l2sq_diff(e, e_tgt_const));
        Var adv = nn::clamp_min_scalar(dist, static_cast<float>(kappa));
        Var recon = nn::l2sq_diff(px, anchor_const);
        Var total = nn::add(adv, nn::scale(recon, cfg.cw_recon_weight));
        if (need_grad) total.backward();
        IterationEval ev;
        ev.total = total.value()[0];
        ev.adv = adv.value()[0];
        ev.smooth = recon.value()[0];
        ev.metric = dist.value()[0];
        ev.success = ev.metric < kappa;
        ev.image = squeeze_image(px.value());
        return ev;
    };
    OptimizeOutcome out = optimize_variable(pixels, cfg, evaluate, 0.0f, 1.0f);

    AttackResult result;
    result.method = to_string(cfg.method);
    result.attribute = cfg.attribute;
    result.config_json = cfg.to_json();
    result.adversarial_image = out.best.image;
    result.final_loss = objectives::total_loss(out.best.adv, out.best.smooth,
                                               cfg.cw_recon_weight);
    result.success = out.best.success;
    result.distance_or_metric = out.best.metric;
    result.step_trace = std::move(out.trace);
    result.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}
}  // namespace

AttackResult attack_cw(const Tensor& image, const AttackConfig& cfg,
                       const targets::Verifier& target_model, const AdversarialTarget& target) {
    cfg.validate();
    if (target.task != AdversarialTarget::Task::kIdentity)
        throw std::invalid_argument("attack_cw expects an identity target");
    return cw_core(image, cfg, target_model, target);
}

AttackResult attack_stargan_cw(const AttackInstance& instance, const AttackConfig& cfg,
                               const gen::Generator& generator,
                               const targets::Verifier& target_model,
                               const AdversarialTarget& target) {
    cfg.validate();
    if (target.task != AdversarialTarget::Task::kIdentity)
        throw std::invalid_argument("attack_stargan_cw expects an identity target");
    const synth::AttributeVector c_new = apply_edit(instance.attrs, cfg);
    Tensor x_edit = generator.forward(instance.image, c_new);
    AttackResult r = cw_core(x_edit, cfg, target_model, target);
    r.source_id = instance.identity.id;
    return r;
}

// -------------------------------------------------------------- landmarks

LandmarkTask landmark_task_from_string(const std::string& s) {
    if (s == "rotate-eyes") return LandmarkTask::kRotateEyes;
    if (s == "out-of-region") return LandmarkTask::kOutOfRegion;
    throw std::invalid_argument("unknown landmark task: " + s);
}

AdversarialTarget make_landmark_target(const AttackInstance& instance, LandmarkTask task,
                                       const std::vector<int>& rotate_indices) {
    AdversarialTarget t;
    Tensor gt = synth::keypoints(instance.identity);
    const int n = gt.dim(0);
    if (task == LandmarkTask::kRotateEyes) {
        t.task = AdversarialTarget::Task::kRotatePoints;
        Tensor tgt = gt;
        double cx = 0.0, cy = 0.0;
        for (int idx : rotate_indices) {
            if (idx < 0 || idx >= n)
                throw std::invalid_argument("rotate index out of range");
            cx += gt[idx * 2 + 0];
            cy += gt[idx * 2 + 1];
        }
        cx /= static_cast<double>(rotate_indices.size());
        cy /= static_cast<double>(rotate_indices.size());
        for (int idx : rotate_indices) {
            const double dx = gt[idx * 2 + 0] - cx;
            const double dy = gt[idx * 2 + 1] - cy;
            // 90 degrees counter-clockwise in image coordinates (y down):
            // (dx, dy) -> (dy, -dx).
            tgt[idx * 2 + 0] = static_cast<float>(cx + dy);
            tgt[idx * 2 + 1] = static_cast<float>(cy - dx);
        }
        t.target_points = tgt;
    } else {
        t.task = AdversarialTarget::Task::kOutOfRegion;
        const double s = synth::kImageSize;
        t.region = {s * 0.3125, s * 0.3125, s * 0.6875, s * 0.6875};  // central box
        // Pull every point to a shrunken copy of the region so the target
        // prediction sits strictly inside it.
        synth::Box kb = synth::keypoint_box(instance.identity);
        Tensor tgt = gt;
        const double rx0 = t.region.x0 + 1.0, rx1 = t.region.x1 - 1.0;
        const double ry0 = t.region.y0 + 1.0, ry1 = t.region.y1 - 1.0;
        for (int k = 0; k < n; ++k) {
            const double u = (gt[k * 2 + 0] - kb.x0) / std::max(1.0f, kb.width());
            const double v = (gt[k * 2 + 1] - kb.y0) / std::max(1.0f, kb.height());
            tgt[k * 2 + 0] = static_cast<float>(rx0 + u * (rx1 - rx0));
            tgt[k * 2 + 1] = static_cast<float>(ry0 + v * (ry1 - ry0));
        }
        t.target_points = tgt;
    }
    return t;
}

namespace {
Tensor points_from_rowvec(const Tensor& row, int n_points) {
    Tensor pts({n_points, 2});
    for (int k = 0; k < n_points * 2; ++k)
        pts[k] = row[k] * static_cast<float>(synth::kImageSize);
    return pts;
}
}  // namespace

AttackResult attack_landmarks(const AttackInstance& instance, const AttackConfig& cfg,
                              const gen::Generator& generator,
                              const targets::Landmarker& landmark_model, LandmarkTask task) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    AdversarialTarget target = make_landmark_target(instance, task);
    const int n_points = landmark_model.config().n_points;

    const synth::AttributeVector c = instance.attrs;
    const synth::AttributeVector c_new = apply_edit(c, cfg);
    Tensor x_prime = generator.invert_reconstruction(instance.image, c, cfg.invert_steps,
                                                     cfg.invert_rate);
    gen::FeatureMap fa = generator.encode(x_prime, c, cfg.layer);
    gen::FeatureMap fb = generator.encode(x_prime, c_new, cfg.layer);

    // Targets in [0,1] image fractions to match the regressor output.
    Tensor tgt_frac({1, n_points * 2});
    for (int k = 0; k < n_points * 2; ++k)
        tgt_frac[k] = target.target_points[k] / static_cast<float>(synth::kImageSize);
    Var tgt_const = Var::constant(tgt_frac);

    synth::Box kb = synth::keypoint_box(instance.identity);
    auto task_metric = [&](const Tensor& pts) {
        if (task == LandmarkTask::kRotateEyes)
            return eval::nme(pts, target.target_points, kb.width(), kb.height());
        return eval::out_of_region_ratio(pts, target.region);
    };

    Tensor clean_pred = landmark_model.predict(instance.image);
    const double clean_metric = task_metric(clean_pred);

    Tensor beta(generator.tap(cfg.layer).shape, 0.5f);
    auto evaluate = [&](const Var& beta_var, bool need_grad) {
        Var img = interp::feature_interpolate_var(generator, beta_var, fa.tensor, fb.tensor,
                                                  cfg.layer);
        Var pred = landmark_model.predict_var(img);  // {1, 2N} fractions
        // Houdini surrogate: the score of the target label is the negative
        // task loss; the current prediction scores zero against itself.
        Var pred_detached = pred.detach();
        Var score_pred = nn::scale(nn::mean(nn::square(nn::sub(pred, pred_detached))), -1.0f);
        Var score_tgt = nn::scale(nn::mean(nn::square(nn::sub(pred, tgt_const))), -1.0f);
        Var gap = nn::sub(score_tgt, score_pred);
        const float task_weight = nn::mean(nn::square(nn::sub(pred_detached, tgt_const))).value()[0];
        Var adv = nn::scale(nn::normal_cdf(gap), task_weight);
        Var smooth = nn::smoothness_penalty(beta_var);
        Var total = nn::add(adv, nn::scale(smooth, cfg.lambda));
        if (need_grad) total.backward();
        IterationEval ev;
        ev.total = total.value()[0];
        ev.adv = adv.value()[0];
        ev.smooth = smooth.value()[0];
        Tensor pts = points_from_rowvec(pred.value(), n_points);
        ev.metric = task_metric(pts);
        ev.success = ev.metric < clean_metric;
        ev.image = squeeze_image(img.value());
        return ev;
    };
    OptimizeOutcome out = optimize_variable(beta, cfg, evaluate, 0.0f, 1.0f);

    AttackResult result;
    result.method = task == LandmarkTask::kRotateEyes ? "landmark-rotate" : "landmark-oor";
    result.attribute = cfg.attribute;
    result.source_id = instance.identity.id;
    result.config_json = cfg.to_json();
    result.adversarial_image = out.best.image;
    result.final_loss = objectives::total_loss(out.best.adv, out.best.smooth, cfg.lambda);
    result.success = out.best.success;
    result.distance_or_metric = out.best.metric;
    result.pre_attack_metric = clean_metric;
    result.step_trace = std::move(out.trace);
    result.wall_time_sec =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return result;
}

Intermediates compute_intermediates(const AttackInstance& instance, const AttackConfig& cfg,
                                    const gen::Generator& generator) {
    Intermediates im;
    const synth::AttributeVector c = instance.attrs;
    const synth::AttributeVector c_new = apply_edit(c, cfg);
    im.x_prime = generator.invert_reconstruction(instance.image, c, cfg.invert_steps,
                                                 cfg.invert_rate);
    im.edit_c = generator.forward(im.x_prime, c);
    im.edit_cnew = generator.forward(im.x_prime, c_new);
    return im;
}

std::vector<AttackResult> run_batch(const std::vector<BatchJob>& jobs,
                                    const gen::Generator* generator,
                                    const targets::Verifier* verifier, int threads) {
    std::vector<AttackResult> results(jobs.size());
    std::atomic<size_t> next{0};
    auto worker = [&]() {
        for (;;) {
            const size_t i = next.fetch_add(1);
            if (i >= jobs.size()) return;
            const BatchJob& job = jobs[i];
            switch (job.config.method) {
                case Method::kSemanticFeature:
                case Method::kSemanticAttribute:
                    results[i] = attack_semantic(job.instance, job.config, *generator,
                                                 *verifier, job.target);
                    break;
                case Method::kPixelCw:
                    results[i] = attack_cw(job.instance.image, job.config, *verifier,
                                           job.target);
                    results[i].source_id = job.instance.identity.id;
                    break;
                case Method::kEditThenCw:
                    results[i] = attack_stargan_cw(job.instance, job.config, *generator,
                                                   *verifier, job.target);
                    break;
            }
            results[i].target_id = job.target_id;
            results[i].target_bits = job.target_bits;
        }
    };
    std::vector<std::thread> pool;
    for (int t = 0; t < std::max(1, threads); ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
    return results;
}

// ------------------------------------------------------------------ run IO

void save_run(const std::string& dir, const std::vector<AttackResult>& results,
              const targets::ThresholdTable& thresholds, const std::string& meta_json) {
    fs::create_directories(dir);
    json j;
    j["schema"] = "semadv-run-v1";
    j["meta"] = json::parse(meta_json.empty() ? "{}" : meta_json);
    json arr = json::array();
    ImageArchive images;
    char key[32];
    for (size_t i = 0; i < results.size(); ++i) {
        arr.push_back(json::parse(results[i].to_json(false)));
        std::snprintf(key, sizeof(key), "result-%06zu", i);
        if (!results[i].adversarial_image.empty()) images.put(key, results[i].adversarial_image);
    }
    j["results"] = arr;
    std::ofstream os(fs::path(dir) / "results.json");
    if (!os) throw std::runtime_error("cannot write run results in " + dir);
    os << j.dump(2);
    images.save((fs::path(dir) / "images.bin").string());
    thresholds.save((fs::path(dir) / "thresholds.json").string());
}

RunData load_run(const std::string& dir) {
    RunData run;
    std::ifstream is(fs::path(dir) / "results.json");
    if (!is) throw std::runtime_error("run directory missing results.json: " + dir);
    json j = json::parse(std::string((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>()));
    if (j.value("schema", "") != "semadv-run-v1")
        throw std::runtime_error("run: unknown schema");
    run.meta_json = j.value("meta", json::object()).dump();
    run.images = ImageArchive::load((fs::path(dir) / "images.bin").string());
    run.thresholds = targets::ThresholdTable::load((fs::path(dir) / "thresholds.json").string());
    char key[32];
    size_t idx = 0;
    for (const auto& e : j.at("results")) {
        AttackResult r = AttackResult::from_json(e.dump());
        std::snprintf(key, sizeof(key), "result-%06zu", idx);
        if (run.images.contains(key)) r.adversarial_image = run.images.get(key);
        run.results.push_back(std::move(r));
        ++idx;
    }
    return run;
}

}  // namespace semadv::attack
