// Command-line front end: pseudo-label selection over detection dumps,
// saliency rasterization, feature reweighting, EMA weight mixing, the
// adversarial loss breakdown, the synthetic-stream simulator, and the
// finite-difference gradient suite.

#include <cstdio>
#include <filesystem>
#include <functional>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"

#include "xda/config.hpp"
#include "xda/ema.hpp"
#include "xda/gradcheck.hpp"
#include "xda/io.hpp"
#include "xda/losses.hpp"
#include "xda/saliency.hpp"
#include "xda/simulator.hpp"
#include "xda/tensor_file.hpp"

namespace {

using nlohmann::ordered_json;

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitValidation = 2;
constexpr int kExitNumerical = 3;

void emit_error(const char* kind, const std::string& message) {
    ordered_json j;
    j["error"] = kind;
    j["message"] = message;
    std::cerr << j.dump() << "\n";
}

int guarded(const std::function<int()>& body) {
    try {
        return body();
    } catch (const xda::ParseError& e) {
        emit_error("parse", e.what());
    } catch (const xda::RangeError& e) {
        emit_error("range", e.what());
    } catch (const xda::MalformedDetection& e) {
        emit_error("malformed_detection", e.what());
    } catch (const xda::ShapeMismatch& e) {
        emit_error("shape_mismatch", e.what());
    } catch (const xda::LayoutMismatch& e) {
        emit_error("layout_mismatch", e.what());
    } catch (const xda::StreamMismatch& e) {
        emit_error("stream_mismatch", e.what());
    } catch (const xda::InvalidProfile& e) {
        emit_error("invalid_profile", e.what());
    } catch (const xda::Error& e) {
        emit_error("error", e.what());
    } catch (const std::exception& e) {
        emit_error("internal", e.what());
    }
    return kExitValidation;
}

std::pair<int, int> parse_grid(const std::string& spec) {
    const std::size_t x = spec.find('x');
    if (x == std::string::npos || x == 0 || x + 1 >= spec.size()) {
        throw xda::ParseError("grid must be HxW, e.g. 20x20");
    }
    int h = 0;
    int w = 0;
    try {
        h = std::stoi(spec.substr(0, x));
        w = std::stoi(spec.substr(x + 1));
    } catch (const std::exception&) {
        throw xda::ParseError("grid must be HxW with integer dimensions");
    }
    if (h <= 0 || w <= 0) {
        throw xda::ParseError("grid dimensions must be positive");
    }
    return {h, w};
}

xda::Dtype parse_dtype(const std::string& name) {
    if (name == "f32") {
        return xda::Dtype::f32;
    }
    if (name == "f64") {
        return xda::Dtype::f64;
    }
    throw xda::ParseError("dtype must be f32 or f64");
}

// Discriminator snapshot layout: rank-1 tensor holding, per scale,
// [image weights (C), image bias, instance weights (C), instance bias].
xda::Discriminator unpack_discriminator(const xda::Tensor& t,
                                        const std::vector<xda::FeatureMap>& features) {
    if (t.dims.size() != 1) {
        throw xda::ShapeMismatch("discriminator tensor must have rank 1");
    }
    std::size_t expected = 0;
    for (const xda::FeatureMap& f : features) {
        expected += 2 * static_cast<std::size_t>(f.channels) + 2;
    }
    if (t.data.size() != expected) {
        throw xda::ShapeMismatch("discriminator tensor has " + std::to_string(t.data.size()) +
                                 " values, feature scales need " + std::to_string(expected));
    }
    xda::Discriminator d;
    std::size_t pos = 0;
    for (const xda::FeatureMap& f : features) {
        const std::size_t c = static_cast<std::size_t>(f.channels);
        xda::DiscriminatorHead img;
        img.weights.assign(t.data.begin() + pos, t.data.begin() + pos + c);
        pos += c;
        img.bias = t.data[pos++];
        xda::DiscriminatorHead ins;
        ins.weights.assign(t.data.begin() + pos, t.data.begin() + pos + c);
        pos += c;
        ins.bias = t.data[pos++];
        d.image_heads.push_back(std::move(img));
        d.instance_heads.push_back(std::move(ins));
    }
    return d;
}

std::vector<xda::FeatureMap> load_feature_maps(const std::vector<std::string>& paths) {
    std::vector<xda::FeatureMap> maps;
    maps.reserve(paths.size());
    for (const std::string& p : paths) {
        maps.push_back(xda::feature_map_from_tensor(xda::read_tensor(p)));
    }
    return maps;
}

int cmd_select(const std::string& dump_path, const std::string& state_path,
               const std::string& out_path, const std::string& state_out) {
    xda::ThresholdState state = xda::load_state(state_path);
    const std::vector<xda::DumpImage> images = xda::read_detection_dump(dump_path);

    std::vector<xda::PseudoLabelSet> sets;
    sets.reserve(images.size());
    std::size_t total_labels = 0;
    for (const xda::DumpImage& image : images) {
        const xda::PredictionBatch batch =
            xda::validate_batch(image.batch, state.num_classes());
        xda::SelectionOutcome step = xda::selection_step(batch, state);
        state = std::move(step.state);
        total_labels += step.labels.labels.size();
        sets.push_back(std::move(step.labels));
    }
    xda::write_label_sets(out_path, sets);
    const std::string state_dest = state_out.empty() ? state_path : state_out;
    xda::save_state(state_dest, state);

    ordered_json summary;
    summary["images"] = images.size();
    summary["labels"] = total_labels;
    summary["k"] = state.iter;
    summary["state"] = state_dest;
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_saliency(const std::string& labels_path, int stride, const std::string& grid_spec,
                 const std::string& out_path, const std::string& image_id, bool ground_truth,
                 const std::string& dtype_name) {
    const auto [grid_h, grid_w] = parse_grid(grid_spec);
    const std::vector<xda::PseudoLabelSet> sets = xda::read_label_sets(labels_path);

    const xda::PseudoLabelSet* chosen = nullptr;
    if (!image_id.empty()) {
        for (const xda::PseudoLabelSet& set : sets) {
            if (set.image_id == image_id) {
                chosen = &set;
                break;
            }
        }
        if (chosen == nullptr) {
            throw xda::StreamMismatch("image id '" + image_id + "' not found in label file");
        }
    } else if (sets.size() == 1) {
        chosen = &sets.front();
    } else {
        throw xda::StreamMismatch("label file holds " + std::to_string(sets.size()) +
                                  " images; pick one with --image-id");
    }

    xda::RasterizeStats stats;
    xda::SaliencyMatrix matrix;
    if (ground_truth) {
        std::vector<xda::BBox> boxes;
        boxes.reserve(chosen->labels.size());
        for (const xda::PseudoLabel& label : chosen->labels) {
            boxes.push_back(label.detection.bbox);
        }
        matrix = xda::saliency_from_ground_truth(boxes, stride, grid_h, grid_w, &stats);
    } else {
        matrix = xda::rasterize_saliency(*chosen, stride, grid_h, grid_w, &stats);
    }
    xda::write_tensor(out_path, xda::tensor_from_saliency(matrix, parse_dtype(dtype_name)));

    ordered_json summary;
    summary["image_id"] = chosen->image_id;
    summary["boxes"] = chosen->labels.size();
    summary["boxes_skipped"] = stats.boxes_skipped;
    summary["out"] = out_path;
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_reweight(const std::string& features_path, const std::string& saliency_path,
                 const std::string& out_path) {
    const xda::Tensor ft = xda::read_tensor(features_path);
    const xda::FeatureMap f = xda::feature_map_from_tensor(ft);
    const xda::SaliencyMatrix m = xda::saliency_from_tensor(xda::read_tensor(saliency_path));
    const xda::FeatureMap out = xda::reweight_features(f, m);
    xda::write_tensor(out_path, xda::tensor_from_feature_map(out, ft.dtype));

    ordered_json summary;
    summary["channels"] = out.channels;
    summary["height"] = out.height;
    summary["width"] = out.width;
    summary["out"] = out_path;
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_ema(const std::string& teacher_path, const std::string& student_path, double alpha,
            const std::string& out_path) {
    const xda::Tensor teacher_t = xda::read_tensor(teacher_path);
    const xda::Tensor student_t = xda::read_tensor(student_path);
    if (teacher_t.dims.size() != 1 || student_t.dims.size() != 1) {
        throw xda::ShapeMismatch("weight snapshots must be rank-1 tensors");
    }
    xda::WeightVector teacher{"snapshot", teacher_t.data};
    xda::WeightVector student{"snapshot", student_t.data};
    const xda::WeightVector mixed = xda::ema_step(teacher, student, alpha);

    xda::Tensor out;
    out.dtype = teacher_t.dtype;
    out.dims = teacher_t.dims;
    out.data = mixed.values;
    xda::write_tensor(out_path, out);

    ordered_json summary;
    summary["parameters"] = mixed.values.size();
    summary["alpha"] = alpha;
    summary["out"] = out_path;
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_losses(const std::vector<std::string>& feature_paths,
               const std::vector<std::string>& saliency_paths, const std::string& disc_path,
               const std::string& domain_name, double lambda_d, double l_sup, double l_unsup,
               const std::string& grads_prefix) {
    if (feature_paths.size() != saliency_paths.size()) {
        throw xda::ShapeMismatch("need one saliency grid per feature scale");
    }
    xda::Domain domain;
    if (domain_name == "source") {
        domain = xda::Domain::source;
    } else if (domain_name == "target") {
        domain = xda::Domain::target;
    } else {
        throw xda::ParseError("domain must be 'source' or 'target'");
    }

    const std::vector<xda::FeatureMap> features = load_feature_maps(feature_paths);
    std::vector<xda::SaliencyMatrix> saliency;
    std::vector<xda::FeatureMap> reweighted;
    reweighted.reserve(features.size());
    for (std::size_t s = 0; s < features.size(); ++s) {
        saliency.push_back(xda::saliency_from_tensor(xda::read_tensor(saliency_paths[s])));
        reweighted.push_back(xda::reweight_features(features[s], saliency[s]));
    }
    const xda::Discriminator disc =
        unpack_discriminator(xda::read_tensor(disc_path), features);

    const xda::ImageLossResult img = xda::image_domain_loss(features, disc, domain, lambda_d);
    const xda::InstanceLossResult ins =
        xda::instance_domain_loss(reweighted, disc, domain, lambda_d);
    const xda::ConsensusLossResult con = xda::consensus_loss(features, reweighted, disc);

    xda::LossWeights weights;
    weights.lambda_d = lambda_d;
    weights.validate();
    const double total =
        xda::total_loss(l_sup, l_unsup, img.loss, ins.loss, con.loss, weights);

    ordered_json j;
    j["domain"] = domain_name;
    j["lambda_d"] = lambda_d;
    j["image_loss"] = img.loss;
    j["instance_loss"] = ins.loss;
    j["consensus_loss"] = con.loss;
    j["image_probabilities"] = img.probabilities;
    j["l_sup"] = l_sup;
    j["l_unsup"] = l_unsup;
    j["total"] = total;

    if (!grads_prefix.empty()) {
        // Combined feature gradient of the adversarial branch per scale: the
        // two domain losses arrive reversal-scaled, the consensus term picks
        // up its lambda_d weight from the total loss; instance-side
        // gradients chain through the reweighting back to the plain map.
        ordered_json written = ordered_json::array();
        for (std::size_t s = 0; s < features.size(); ++s) {
            xda::FeatureMap grad =
                xda::reweight_backward(ins.feature_grads[s], saliency[s]);
            const xda::FeatureMap con_chained =
                xda::reweight_backward(con.reweighted_feature_grads[s], saliency[s]);
            for (std::size_t i = 0; i < grad.data.size(); ++i) {
                grad.data[i] += img.feature_grads[s].data[i] +
                                lambda_d * (con.feature_grads[s].data[i] + con_chained.data[i]);
            }
            const std::string path = grads_prefix + ".s" + std::to_string(s) + ".vttn";
            xda::write_tensor(path, xda::tensor_from_feature_map(grad));
            written.push_back(path);
        }
        j["feature_grads"] = std::move(written);
    }
    std::cout << j.dump() << "\n";
    return kExitOk;
}

int cmd_disc_init(const std::vector<std::string>& feature_paths, const std::string& out_path,
                  double value, const std::string& dtype_name) {
    const std::vector<xda::FeatureMap> features = load_feature_maps(feature_paths);
    xda::Tensor out;
    out.dtype = parse_dtype(dtype_name);
    std::size_t total = 0;
    for (const xda::FeatureMap& f : features) {
        total += 2 * static_cast<std::size_t>(f.channels) + 2;
    }
    out.dims = {static_cast<std::uint32_t>(total)};
    out.data.assign(total, value);
    xda::write_tensor(out_path, out);

    ordered_json summary;
    summary["parameters"] = total;
    summary["scales"] = features.size();
    summary["out"] = out_path;
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_simulate(const std::string& scenario_path, std::optional<int> iters,
                 const std::string& out_path, std::string csv_path) {
    xda::ScenarioConfig scenario = xda::load_scenario(scenario_path);
    if (iters.has_value()) {
        if (*iters < 0) {
            throw xda::RangeError("--iters must be >= 0");
        }
        scenario.num_images = *iters;
    }
    if (csv_path.empty()) {
        csv_path = std::filesystem::path(out_path).replace_extension(".csv").string();
    }

    const std::vector<xda::PredictionBatch> stream =
        xda::generate_stream(scenario.profiles, scenario.num_images, scenario.image_size,
                             scenario.config.seed);
    const xda::ThresholdState initial = xda::make_threshold_state(scenario.config);
    xda::AdaptiveSelectionResult adaptive = xda::run_adaptive_selection(stream, initial);
    const std::vector<xda::EvalReport> sweep = xda::sweep_static_thresholds(
        stream, scenario.static_thresholds, scenario.config.num_classes);

    xda::write_report(out_path, scenario, adaptive.report, sweep);
    xda::write_trajectory_csv(csv_path, adaptive.report);

    std::optional<double> best_static;
    for (const xda::EvalReport& r : sweep) {
        if (r.macro_f1.has_value() && (!best_static || *r.macro_f1 > *best_static)) {
            best_static = *r.macro_f1;
        }
    }

    ordered_json summary;
    summary["report"] = out_path;
    summary["csv"] = csv_path;
    summary["images"] = scenario.num_images;
    summary["adaptive_macro_f1"] =
        adaptive.report.macro_f1 ? ordered_json(*adaptive.report.macro_f1) : ordered_json();
    summary["best_static_macro_f1"] = best_static ? ordered_json(*best_static) : ordered_json();
    std::cout << summary.dump() << "\n";
    return kExitOk;
}

int cmd_gradcheck(int instances, std::uint64_t seed, double lambda_d) {
    const xda::GradCheckReport report = xda::run_gradient_checks(instances, seed, lambda_d);
    ordered_json j;
    j["instances"] = report.instances;
    j["checks"] = report.checks;
    j["failures"] = report.failures;
    j["max_rel_err"] = report.max_rel_err;
    if (!report.messages.empty()) {
        j["messages"] = report.messages;
    }
    std::cout << j.dump() << "\n";
    return report.ok() ? kExitOk : kExitNumerical;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Cross-domain adaptation toolkit: adaptive pseudo-label selection, "
                 "saliency-guided alignment numerics, and teacher weight averaging"};
    app.require_subcommand(1);

    // select
    auto* select = app.add_subcommand("select", "Run adaptive selection over a detection dump");
    std::string sel_dump, sel_state, sel_out, sel_state_out;
    select->add_option("--dump", sel_dump, "Detection dump (JSON Lines)")->required();
    select->add_option("--state", sel_state, "Threshold state file (JSON)")->required();
    select->add_option("--out", sel_out, "Output pseudo-label file (JSON Lines)")->required();
    select->add_option("--state-out", sel_state_out,
                       "Where to write the updated state (default: --state in place)");

    // saliency
    auto* saliency = app.add_subcommand("saliency", "Rasterize labels into a saliency grid");
    std::string sal_labels, sal_grid, sal_out, sal_image_id;
    int sal_stride = 0;
    bool sal_gt = false;
    std::string sal_dtype = "f64";
    saliency->add_option("--labels", sal_labels, "Pseudo-label file (JSON Lines)")->required();
    saliency->add_option("--stride", sal_stride, "Feature stride in pixels")->required();
    saliency->add_option("--grid", sal_grid, "Grid size HxW")->required();
    saliency->add_option("--out", sal_out, "Output tensor file")->required();
    saliency->add_option("--image-id", sal_image_id, "Image to rasterize (required when the "
                                                     "label file holds several)");
    saliency->add_flag("--gt", sal_gt, "Treat boxes as ground truth (confidence 1)");
    saliency->add_option("--dtype", sal_dtype, "Output dtype: f32 or f64 (default f64)");

    // reweight
    auto* reweight = app.add_subcommand("reweight", "Apply a saliency grid to a feature map");
    std::string rw_features, rw_saliency, rw_out;
    reweight->add_option("--features", rw_features, "Feature tensor (C x H x W)")->required();
    reweight->add_option("--saliency", rw_saliency, "Saliency tensor (H x W)")->required();
    reweight->add_option("--out", rw_out, "Output tensor file")->required();

    // ema
    auto* ema = app.add_subcommand("ema", "One EMA step over two weight snapshots");
    std::string ema_teacher, ema_student, ema_out;
    double ema_alpha = 0.9996;
    ema->add_option("--teacher", ema_teacher, "Teacher snapshot (rank-1 tensor)")->required();
    ema->add_option("--student", ema_student, "Student snapshot (rank-1 tensor)")->required();
    ema->add_option("--alpha", ema_alpha, "EMA momentum in [0,1]")->required();
    ema->add_option("--out", ema_out, "Output tensor file")->required();

    // losses
    auto* losses = app.add_subcommand("losses", "Adversarial loss breakdown for one image");
    std::vector<std::string> loss_features, loss_saliency;
    std::string loss_disc, loss_domain, loss_grads;
    double loss_lambda_d = 0.1, loss_sup = 0.0, loss_unsup = 0.0;
    losses->add_option("--features", loss_features, "Feature tensor per scale")->required();
    losses->add_option("--saliency", loss_saliency, "Saliency tensor per scale")->required();
    losses->add_option("--disc", loss_disc, "Discriminator snapshot (rank-1 tensor)")->required();
    losses->add_option("--domain", loss_domain, "source or target")->required();
    losses->add_option("--lambda-d", loss_lambda_d, "Adversarial weight (default 0.1)");
    losses->add_option("--l-sup", loss_sup, "Supervised detection loss scalar (default 0)");
    losses->add_option("--l-unsup", loss_unsup, "Pseudo-label detection loss scalar (default 0)");
    losses->add_option("--grads", loss_grads,
                       "Prefix for per-scale feature-gradient tensors (<prefix>.s<k>.vttn)");

    // disc-init
    auto* disc_init = app.add_subcommand("disc-init",
                                         "Write a discriminator snapshot sized to feature scales");
    std::vector<std::string> di_features;
    std::string di_out;
    double di_value = 0.0;
    std::string di_dtype = "f64";
    disc_init->add_option("--features", di_features, "Feature tensor per scale")->required();
    disc_init->add_option("--out", di_out, "Output tensor file")->required();
    disc_init->add_option("--value", di_value, "Fill value (default 0)");
    disc_init->add_option("--dtype", di_dtype, "Output dtype: f32 or f64 (default f64)");

    // simulate
    auto* simulate = app.add_subcommand("simulate", "Run the synthetic-stream comparison");
    std::string sim_scenario, sim_out, sim_csv;
    int sim_iters = -1;
    simulate->add_option("--scenario", sim_scenario, "Scenario config (JSON)")->required();
    simulate->add_option("--iters", sim_iters, "Override the scenario's image count");
    simulate->add_option("--out", sim_out, "Report output path (JSON)")->required();
    simulate->add_option("--csv", sim_csv, "Trajectory CSV path (default: report with .csv)");

    // gradcheck
    auto* gradcheck = app.add_subcommand("gradcheck", "Finite-difference gradient suite");
    int gc_instances = 20;
    std::uint64_t gc_seed = 7;
    double gc_lambda_d = 0.1;
    gradcheck->add_option("--instances", gc_instances, "Random instances (default 20)");
    gradcheck->add_option("--seed", gc_seed, "RNG seed (default 7)");
    gradcheck->add_option("--lambda-d", gc_lambda_d, "Adversarial weight (default 0.1)");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    if (select->parsed()) {
        return guarded([&] { return cmd_select(sel_dump, sel_state, sel_out, sel_state_out); });
    }
    if (saliency->parsed()) {
        return guarded([&] {
            return cmd_saliency(sal_labels, sal_stride, sal_grid, sal_out, sal_image_id, sal_gt,
                                sal_dtype);
        });
    }
    if (reweight->parsed()) {
        return guarded([&] { return cmd_reweight(rw_features, rw_saliency, rw_out); });
    }
    if (ema->parsed()) {
        return guarded([&] { return cmd_ema(ema_teacher, ema_student, ema_alpha, ema_out); });
    }
    if (losses->parsed()) {
        return guarded([&] {
            return cmd_losses(loss_features, loss_saliency, loss_disc, loss_domain,
                              loss_lambda_d, loss_sup, loss_unsup, loss_grads);
        });
    }
    if (disc_init->parsed()) {
        return guarded([&] { return cmd_disc_init(di_features, di_out, di_value, di_dtype); });
    }
    if (simulate->parsed()) {
        return guarded([&] {
            return cmd_simulate(sim_scenario,
                                sim_iters >= 0 ? std::optional<int>(sim_iters) : std::nullopt,
                                sim_out, sim_csv);
        });
    }
    if (gradcheck->parsed()) {
        return guarded([&] { return cmd_gradcheck(gc_instances, gc_seed, gc_lambda_d); });
    }
    return kExitUsage;
}
