#include "xda/io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>

#include "json.hpp"

namespace xda {

namespace {

using ordered_json = nlohmann::ordered_json;
using nlohmann::json;

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open '" + path.string() + "'");
    }
    return std::string((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw ParseError("cannot write '" + path.string() + "'");
    }
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw ParseError("short write to '" + path.string() + "'");
    }
}

ordered_json parse_object(const std::string& text, const char* what) {
    ordered_json j;
    try {
        j = ordered_json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
    if (!j.is_object()) {
        throw ParseError(std::string(what) + ": expected a JSON object");
    }
    return j;
}

void reject_unknown_keys(const ordered_json& j, const std::set<std::string>& known,
                         const char* what) {
    for (const auto& [key, value] : j.items()) {
        if (known.find(key) == known.end()) {
            throw ParseError(std::string(what) + ": unknown key '" + key + "'");
        }
    }
}

double get_finite(const ordered_json& j, const char* key, const char* what) {
    double v = 0.0;
    try {
        v = j.at(key).get<double>();
    } catch (const json::exception& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
    if (!std::isfinite(v)) {
        throw ParseError(std::string(what) + ": '" + key + "' must be finite");
    }
    return v;
}

ordered_json detection_to_json(const Detection& d) {
    ordered_json out;
    out["x1"] = d.bbox.x1;
    out["y1"] = d.bbox.y1;
    out["x2"] = d.bbox.x2;
    out["y2"] = d.bbox.y2;
    out["conf"] = d.conf;
    out["scores"] = d.class_scores;
    return out;
}

Detection detection_from_json(const ordered_json& j, const char* what) {
    static const std::set<std::string> known = {"x1", "y1", "x2", "y2", "conf", "scores"};
    reject_unknown_keys(j, known, what);
    Detection d;
    d.bbox.x1 = get_finite(j, "x1", what);
    d.bbox.y1 = get_finite(j, "y1", what);
    d.bbox.x2 = get_finite(j, "x2", what);
    d.bbox.y2 = get_finite(j, "y2", what);
    d.conf = get_finite(j, "conf", what);
    try {
        d.class_scores = j.at("scores").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
    for (double s : d.class_scores) {
        if (!std::isfinite(s)) {
            throw ParseError(std::string(what) + ": non-finite score");
        }
    }
    return d;
}

ordered_json metrics_to_json(const ClassMetrics& m) {
    ordered_json out;
    out["kept"] = m.kept;
    out["kept_correct"] = m.kept_correct;
    out["kept_false"] = m.kept_false;
    out["total_correct"] = m.total_correct;
    out["precision"] = m.precision.has_value() ? ordered_json(*m.precision) : ordered_json();
    out["recall"] = m.recall.has_value() ? ordered_json(*m.recall) : ordered_json();
    out["f1"] = m.f1.has_value() ? ordered_json(*m.f1) : ordered_json();
    return out;
}

ordered_json eval_to_json(const EvalReport& report) {
    ordered_json out;
    out["aggregate"] = metrics_to_json(report.aggregate);
    ordered_json per_class = ordered_json::array();
    for (std::size_t c = 0; c < report.per_class.size(); ++c) {
        ordered_json entry = metrics_to_json(report.per_class[c]);
        ordered_json keyed;
        keyed["class"] = c;
        for (auto& [k, v] : entry.items()) {
            keyed[k] = v;
        }
        per_class.push_back(std::move(keyed));
    }
    out["per_class"] = std::move(per_class);
    out["macro_f1"] = report.macro_f1.has_value() ? ordered_json(*report.macro_f1) : ordered_json();
    out["total_detections"] = report.total_detections;
    out["dropped"] = report.dropped;
    return out;
}

ordered_json config_to_json(const RunConfig& c) {
    ordered_json out;
    out["num_classes"] = c.num_classes;
    out["delta_t"] = c.delta_t;
    out["delta_0"] = c.delta_0;
    out["alpha_t"] = c.alpha_t;
    out["alpha"] = c.alpha;
    out["lambda_d"] = c.lambda_d;
    out["M"] = c.num_bins;
    out["beta_start"] = c.beta_start;
    out["beta_end"] = c.beta_end;
    out["K"] = c.total_iters;
    out["lambda1"] = c.lambda1;
    out["lambda2"] = c.lambda2;
    out["lambda3"] = c.lambda3;
    out["seed"] = c.seed;
    return out;
}

ConfDistribution dist_from_json(const ordered_json& j, const char* what) {
    if (!j.is_object()) {
        throw ParseError(std::string(what) + ": distribution must be an object");
    }
    std::string kind;
    try {
        kind = j.at("dist").get<std::string>();
    } catch (const json::exception& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
    ConfDistribution d;
    if (kind == "beta") {
        reject_unknown_keys(j, {"dist", "a", "b"}, what);
        d = ConfDistribution::beta(get_finite(j, "a", what), get_finite(j, "b", what));
    } else if (kind == "uniform") {
        reject_unknown_keys(j, {"dist", "lo", "hi"}, what);
        d = ConfDistribution::uniform(get_finite(j, "lo", what), get_finite(j, "hi", what));
    } else {
        throw ParseError(std::string(what) + ": unknown distribution '" + kind + "'");
    }
    try {
        d.validate();
    } catch (const InvalidProfile& e) {
        throw ParseError(std::string(what) + ": " + e.what());
    }
    return d;
}

}  // namespace

std::string dump_image_line(const DumpImage& image) {
    ordered_json j;
    j["image_id"] = image.batch.image_id;
    j["width"] = image.batch.image_size.width;
    j["height"] = image.batch.image_size.height;
    j["conf_semantics"] = image.conf_semantics;
    ordered_json dets = ordered_json::array();
    for (const Detection& d : image.batch.detections) {
        dets.push_back(detection_to_json(d));
    }
    j["detections"] = std::move(dets);
    return j.dump();
}

DumpImage parse_dump_image_line(const std::string& line) {
    const ordered_json j = parse_object(line, "dump");
    static const std::set<std::string> known = {"image_id", "width", "height", "conf_semantics",
                                                "detections"};
    reject_unknown_keys(j, known, "dump");
    DumpImage image;
    try {
        image.batch.image_id = j.at("image_id").get<std::string>();
        image.batch.image_size.width = j.at("width").get<int>();
        image.batch.image_size.height = j.at("height").get<int>();
        image.conf_semantics = j.at("conf_semantics").get<std::string>();
        for (const auto& det : j.at("detections")) {
            image.batch.detections.push_back(detection_from_json(det, "dump detection"));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("dump: ") + e.what());
    }
    if (image.batch.image_size.width <= 0 || image.batch.image_size.height <= 0) {
        throw ParseError("dump: width and height must be positive");
    }
    return image;
}

std::vector<DumpImage> read_detection_dump(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open '" + path.string() + "'");
    }
    std::vector<DumpImage> images;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            images.push_back(parse_dump_image_line(line));
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return images;
}

void write_detection_dump(const std::filesystem::path& path, std::span<const DumpImage> images) {
    std::string text;
    for (const DumpImage& image : images) {
        text += dump_image_line(image);
        text += '\n';
    }
    write_file(path, text);
}

std::string label_set_line(const PseudoLabelSet& set) {
    ordered_json j;
    j["image_id"] = set.image_id;
    ordered_json labels = ordered_json::array();
    for (const PseudoLabel& label : set.labels) {
        ordered_json entry = detection_to_json(label.detection);
        entry["class"] = label.assigned_class;
        labels.push_back(std::move(entry));
    }
    j["labels"] = std::move(labels);
    return j.dump();
}

PseudoLabelSet parse_label_set_line(const std::string& line) {
    const ordered_json j = parse_object(line, "labels");
    reject_unknown_keys(j, {"image_id", "labels"}, "labels");
    PseudoLabelSet set;
    try {
        set.image_id = j.at("image_id").get<std::string>();
        for (const auto& entry : j.at("labels")) {
            static const std::set<std::string> known = {"x1",   "y1",     "x2",   "y2",
                                                        "conf", "scores", "class"};
            reject_unknown_keys(entry, known, "label");
            PseudoLabel label;
            ordered_json det = entry;
            det.erase("class");
            label.detection = detection_from_json(det, "label");
            label.assigned_class = entry.at("class").get<int>();
            if (label.assigned_class < 0 ||
                label.assigned_class >= static_cast<int>(label.detection.class_scores.size())) {
                throw ParseError("label: class out of range");
            }
            label.one_hot.assign(label.detection.class_scores.size(), 0.0);
            label.one_hot[static_cast<std::size_t>(label.assigned_class)] = 1.0;
            set.labels.push_back(std::move(label));
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("labels: ") + e.what());
    }
    return set;
}

std::vector<PseudoLabelSet> read_label_sets(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ParseError("cannot open '" + path.string() + "'");
    }
    std::vector<PseudoLabelSet> sets;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) {
            continue;
        }
        try {
            sets.push_back(parse_label_set_line(line));
        } catch (const ParseError& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return sets;
}

void write_label_sets(const std::filesystem::path& path, std::span<const PseudoLabelSet> sets) {
    std::string text;
    for (const PseudoLabelSet& set : sets) {
        text += label_set_line(set);
        text += '\n';
    }
    write_file(path, text);
}

std::string state_to_text(const ThresholdState& state) {
    ordered_json j;
    j["version"] = 1;
    j["k"] = state.iter;
    j["K"] = state.total_iters;
    j["delta_t"] = state.delta_t;
    j["alpha_t"] = state.alpha_t;
    j["beta_start"] = state.beta_start;
    j["beta_end"] = state.beta_end;
    j["M"] = state.num_bins;
    ordered_json per_class = ordered_json::array();
    for (std::size_t c = 0; c < state.per_class.size(); ++c) {
        ordered_json entry;
        entry["class"] = c;
        entry["delta"] = state.per_class[c];
        per_class.push_back(std::move(entry));
    }
    j["per_class"] = std::move(per_class);
    return j.dump() + "\n";
}

ThresholdState state_from_text(const std::string& text) {
    const ordered_json j = parse_object(text, "state");
    static const std::set<std::string> known = {"version", "k",        "K",          "delta_t",
                                                "alpha_t", "beta_start", "beta_end", "M",
                                                "per_class"};
    reject_unknown_keys(j, known, "state");
    ThresholdState state;
    try {
        const int version = j.at("version").get<int>();
        if (version != 1) {
            throw ParseError("state: unsupported version " + std::to_string(version));
        }
        state.iter = j.at("k").get<std::int64_t>();
        state.total_iters = j.at("K").get<std::int64_t>();
        state.delta_t = j.at("delta_t").get<double>();
        state.alpha_t = j.at("alpha_t").get<double>();
        state.beta_start = j.at("beta_start").get<double>();
        state.beta_end = j.at("beta_end").get<double>();
        state.num_bins = j.at("M").get<int>();
        const auto& per_class = j.at("per_class");
        if (!per_class.is_array() || per_class.empty()) {
            throw ParseError("state: per_class must be a non-empty array");
        }
        state.per_class.resize(per_class.size());
        std::size_t expected = 0;
        for (const auto& entry : per_class) {
            reject_unknown_keys(entry, {"class", "delta"}, "state per_class");
            const std::size_t c = entry.at("class").get<std::size_t>();
            if (c != expected) {
                throw ParseError("state: per_class must list classes 0..n-1 in order");
            }
            state.per_class[c] = entry.at("delta").get<double>();
            ++expected;
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("state: ") + e.what());
    }
    state.validate();
    return state;
}

ThresholdState load_state(const std::filesystem::path& path) {
    return state_from_text(read_file(path));
}

void save_state(const std::filesystem::path& path, const ThresholdState& state) {
    state.validate();
    write_file(path, state_to_text(state));
}

ScenarioConfig parse_scenario_text(const std::string& text) {
    const ordered_json j = parse_object(text, "scenario");
    static const std::set<std::string> known = {"config", "image", "num_images", "profiles",
                                                "static_thresholds"};
    reject_unknown_keys(j, known, "scenario");

    ScenarioConfig scenario;
    try {
        if (!j.contains("profiles") || !j.at("profiles").is_array() || j.at("profiles").empty()) {
            throw ParseError("scenario: 'profiles' must be a non-empty array");
        }

        bool config_has_num_classes = false;
        if (j.contains("config")) {
            config_has_num_classes = j.at("config").contains("num_classes");
            scenario.config = parse_config_text(j.at("config").dump());
        }
        if (j.contains("image")) {
            const auto& image = j.at("image");
            reject_unknown_keys(image, {"width", "height"}, "scenario image");
            scenario.image_size.width = image.at("width").get<int>();
            scenario.image_size.height = image.at("height").get<int>();
            if (scenario.image_size.width <= 0 || scenario.image_size.height <= 0) {
                throw ParseError("scenario: image dimensions must be positive");
            }
        }
        if (j.contains("num_images")) {
            scenario.num_images = j.at("num_images").get<int>();
            if (scenario.num_images < 0) {
                throw ParseError("scenario: num_images must be >= 0");
            }
        }

        scenario.profiles.clear();
        int next_class = 0;
        for (const auto& p : j.at("profiles")) {
            static const std::set<std::string> profile_keys = {
                "class", "tp_conf", "fp_conf", "tp_rate", "fp_rate", "box_size"};
            reject_unknown_keys(p, profile_keys, "scenario profile");
            ClassProfile profile;
            profile.class_id = p.at("class").get<int>();
            if (profile.class_id != next_class) {
                throw ParseError("scenario: profiles must cover classes 0..n-1 in order");
            }
            profile.tp_conf = dist_from_json(p.at("tp_conf"), "scenario tp_conf");
            profile.fp_conf = dist_from_json(p.at("fp_conf"), "scenario fp_conf");
            profile.tp_rate = get_finite(p, "tp_rate", "scenario profile");
            profile.fp_rate = get_finite(p, "fp_rate", "scenario profile");
            const auto& box = p.at("box_size");
            if (!box.is_array() || box.size() != 2) {
                throw ParseError("scenario: box_size must be [min, max]");
            }
            profile.box_min = box.at(0).get<double>();
            profile.box_max = box.at(1).get<double>();
            scenario.profiles.push_back(std::move(profile));
            ++next_class;
        }

        if (config_has_num_classes &&
            scenario.config.num_classes != static_cast<int>(scenario.profiles.size())) {
            throw ParseError("scenario: config num_classes does not match profile count");
        }
        scenario.config.num_classes = static_cast<int>(scenario.profiles.size());

        if (j.contains("static_thresholds")) {
            scenario.static_thresholds = j.at("static_thresholds").get<std::vector<double>>();
            for (double t : scenario.static_thresholds) {
                if (!std::isfinite(t)) {
                    throw ParseError("scenario: static thresholds must be finite");
                }
            }
        }
    } catch (const json::exception& e) {
        throw ParseError(std::string("scenario: ") + e.what());
    }

    scenario.config.validate();
    for (const ClassProfile& profile : scenario.profiles) {
        try {
            profile.validate(scenario.image_size);
        } catch (const InvalidProfile& e) {
            throw ParseError(std::string("scenario: ") + e.what());
        }
    }
    return scenario;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
    return parse_scenario_text(read_file(path));
}

std::string report_to_text(const ScenarioConfig& scenario, const EvalReport& adaptive_report,
                           std::span<const EvalReport> static_reports) {
    ordered_json j;
    j["rng"] = adaptive_report.rng_id.empty() ? kRngId : adaptive_report.rng_id;
    j["seed"] = scenario.config.seed;
    j["num_images"] = scenario.num_images;
    j["num_classes"] = scenario.config.num_classes;
    j["config"] = config_to_json(scenario.config);

    ordered_json adaptive = eval_to_json(adaptive_report);
    adaptive["iterations"] = static_cast<std::int64_t>(adaptive_report.trajectory.size());
    adaptive["final_thresholds"] = adaptive_report.final_thresholds;
    j["adaptive"] = std::move(adaptive);

    ordered_json sweep = ordered_json::array();
    for (std::size_t i = 0; i < static_reports.size(); ++i) {
        ordered_json entry;
        entry["threshold"] =
            i < scenario.static_thresholds.size() ? scenario.static_thresholds[i] : 0.0;
        ordered_json body = eval_to_json(static_reports[i]);
        for (auto& [k, v] : body.items()) {
            entry[k] = v;
        }
        sweep.push_back(std::move(entry));
    }
    j["static_sweep"] = std::move(sweep);
    return j.dump(2) + "\n";
}

void write_report(const std::filesystem::path& path, const ScenarioConfig& scenario,
                  const EvalReport& adaptive_report, std::span<const EvalReport> static_reports) {
    write_file(path, report_to_text(scenario, adaptive_report, static_reports));
}

std::string trajectory_csv_text(const EvalReport& report) {
    std::string out = "iteration,class,delta\n";
    char buf[64];
    for (std::size_t k = 0; k < report.trajectory.size(); ++k) {
        const std::vector<double>& row = report.trajectory[k];
        for (std::size_t c = 0; c < row.size(); ++c) {
            std::snprintf(buf, sizeof(buf), "%zu,%zu,%.17g\n", k + 1, c, row[c]);
            out += buf;
        }
    }
    return out;
}

void write_trajectory_csv(const std::filesystem::path& path, const EvalReport& report) {
    write_file(path, trajectory_csv_text(report));
}

}  // namespace xda
